#include "buzz/digest.hpp"

#include <openssl/evp.h>

#include "buzz/errors.hpp"

namespace buzz {

std::string sha256_hex(std::string_view data) {
    unsigned char hash[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), hash, &len, EVP_sha256(), nullptr) != 1) {
        throw InternalError("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[hash[i] >> 4]);
        out.push_back(kHex[hash[i] & 0xf]);
    }
    return out;
}

}  // namespace buzz
