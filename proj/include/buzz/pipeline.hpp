#pragma once

#include "buzz/config.hpp"
#include "buzz/report.hpp"

namespace buzz {

// Test seams: when set, the pipeline uses these instead of building the
// provider/encoder from the config (call counters stay observable).
struct RunHooks {
    Provider* provider = nullptr;
    Encoder* encoder = nullptr;
    Encoder* encoder2 = nullptr;
};

// Full protocol: parse -> temporal split -> (per variant) rationales for all
// records -> augment -> encode -> hyperparameter search on train -> refit ->
// predict on test -> metrics. Artifacts land under config.out_dir; reruns
// reuse rationale stores, embedding matrices and the response cache.
EvalReport run_pipeline(const ExperimentConfig& config, const RunHooks& hooks = {});

// run_pipeline restricted to {baseline, topic_only, audience_only, time_only,
// full_reasoning}.
EvalReport run_ablation(const ExperimentConfig& config, const RunHooks& hooks = {});

// Baseline pipeline once per encoder backend; rows keyed by encoder id.
EvalReport run_encoder_comparison(const ExperimentConfig& config, const RunHooks& hooks = {});

// Few-shot numeric prediction: train buckets pick the demos, train range
// clamps the outputs, extraction failures are counted rather than imputed.
EvalReport run_llm_baseline(const ExperimentConfig& config, const RunHooks& hooks = {});

// Stage entry points backing the CLI subcommands.
ParseReport stage_ingest(const ExperimentConfig& config);
TemporalSplit stage_split(const ExperimentConfig& config);
void stage_reason(const ExperimentConfig& config, const RunHooks& hooks = {});
void stage_encode(const ExperimentConfig& config, const RunHooks& hooks = {});
void stage_train(const ExperimentConfig& config, const RunHooks& hooks = {});

}  // namespace buzz
