#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mqmc/harness/trainer.hpp"

namespace mqmc::harness {

std::string metrics_json(const MetricsReport& r, Direction d, const std::string& split);
std::string config_json(const TrainConfig& cfg);

struct ExperimentOptions {
    std::string out_dir;                     // empty: no artifacts on disk
    std::ostream* log = nullptr;             // receives every metrics record as it is produced
    std::optional<enc::Checkpoint> resume;   // continue from this state
    std::function<void(const Trainer&, const StepLog&)> on_step;
};

struct ExperimentResult {
    MetricsReport best_validation;
    MetricsReport test;
    std::uint64_t best_step = 0;
    std::vector<std::string> records;  // the full metrics log, one JSON object per entry
    ModelParams<float> best_params;
};

/// Trains for cfg.steps, evaluates on the validation split every
/// eval_interval steps (and at the start and the end), keeps the parameters
/// with the best validation Rsum and reports their test metrics.
/// Artifacts in out_dir: metrics.jsonl, last.ckpt, best.ckpt.
ExperimentResult run_experiment(const TrainConfig& cfg, const data::Dataset& ds, const ExperimentOptions& opts = {});

struct AblationRun {
    std::string grid;
    std::string label;
    std::uint64_t seed = 0;
    TrainConfig config;
};

/// Grids: "modality", "queue" (multi+scored / multi+unit / single),
/// "weights" (loss-weight sweep), "queue-size". Each seed sets the
/// parameter and shuffle seeds.
std::vector<AblationRun> ablation_grid(const std::string& grid, const TrainConfig& base,
                                       const std::vector<std::uint64_t>& seeds);
std::vector<std::string> ablation_grids();

}  // namespace mqmc::harness
