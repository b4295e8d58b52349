#include "mqmc/harness/experiment.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mqmc::harness {

std::string metrics_json(const MetricsReport& r, Direction d, const std::string& split) {
    const DirectionMetrics& m = d == Direction::MvToProd ? r.mv_to_prod : r.prod_to_mv;
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["split"] = split;
    j["direction"] = direction_name(d);
    j["R@1"] = m.r1;
    j["R@5"] = m.r5;
    j["R@10"] = m.r10;
    j["MedR"] = m.medr;
    j["Rsum"] = m.rsum;
    j["degenerate"] = r.degenerate;
    j["config_hash"] = r.config_hash;
    return j.dump();
}

std::string config_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["event"] = "config";
    j["config_hash"] = cfg.hash();
    for (const auto& [k, v] : parse_key_values(cfg.to_text())) j[k] = v;
    return j.dump();
}

ExperimentResult run_experiment(const TrainConfig& cfg, const data::Dataset& ds, const ExperimentOptions& opts) {
    cfg.validate();
    Trainer trainer(cfg, ds, data::split(ds, cfg.split_seed));
    if (opts.resume) trainer.restore(*opts.resume);

    ExperimentResult result;
    std::ofstream file;
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        file.open(std::filesystem::path(opts.out_dir) / "metrics.jsonl", opts.resume ? std::ios::app : std::ios::trunc);
        if (!file) throw data::DataError("cannot write metrics log in '" + opts.out_dir + "'");
    }
    auto emit = [&](const std::string& line) {
        result.records.push_back(line);
        if (opts.log) *opts.log << line << '\n';
        if (file) file << line << '\n';
    };

    bool have_best = false;
    auto validate = [&] {
        MetricsReport r = evaluate(trainer.params(), ds, trainer.split().validation, trainer.dims(), cfg.modality);
        r.config_hash = cfg.hash();
        r.step = trainer.current_step();
        emit(metrics_json(r, Direction::MvToProd, "validation"));
        emit(metrics_json(r, Direction::ProdToMv, "validation"));
        if (!have_best || r.rsum() > result.best_validation.rsum()) {
            have_best = true;
            result.best_validation = r;
            result.best_step = r.step;
            result.best_params = trainer.params();
        }
    };

    emit(config_json(cfg));
    validate();
    while (trainer.current_step() < cfg.steps) {
        const StepLog log = trainer.step();
        emit(log.to_json());
        if (opts.on_step) opts.on_step(trainer, log);
        if (trainer.current_step() % cfg.eval_interval == 0 || trainer.current_step() == cfg.steps) validate();
    }

    result.test = evaluate(result.best_params, ds, trainer.split().test, trainer.dims(), cfg.modality);
    result.test.config_hash = cfg.hash();
    result.test.step = result.best_step;
    emit(metrics_json(result.test, Direction::MvToProd, "test"));
    emit(metrics_json(result.test, Direction::ProdToMv, "test"));

    if (!opts.out_dir.empty()) {
        const std::filesystem::path dir(opts.out_dir);
        enc::save_checkpoint(trainer.checkpoint(), (dir / "last.ckpt").string());
        enc::Checkpoint best;
        best.config_hash = cfg.hash();
        best.step = result.best_step;
        best.config_text = cfg.to_text();
        best.params = result.best_params;
        enc::save_checkpoint(best, (dir / "best.ckpt").string());
    }
    return result;
}

std::vector<std::string> ablation_grids() { return {"modality", "queue", "weights", "queue-size"}; }

std::vector<AblationRun> ablation_grid(const std::string& grid, const TrainConfig& base,
                                       const std::vector<std::uint64_t>& seeds) {
    std::vector<std::pair<std::string, TrainConfig>> variants;
    auto add = [&](std::string label, auto&& edit) {
        TrainConfig c = base;
        edit(c);
        variants.emplace_back(std::move(label), c);
    };
    if (grid == "modality") {
        add("all", [](TrainConfig& c) { c.modality = enc::Modality::All; });
        add("visual-only", [](TrainConfig& c) { c.modality = enc::Modality::VisualOnly; });
        add("text-only", [](TrainConfig& c) { c.modality = enc::Modality::TextOnly; });
    } else if (grid == "queue") {
        add("multi+scored", [](TrainConfig& c) {
            c.queue_mode = QueueMode::Multi;
            c.importance_mode = ImportanceMode::Scored;
        });
        add("multi+unit", [](TrainConfig& c) {
            c.queue_mode = QueueMode::Multi;
            c.importance_mode = ImportanceMode::Unit;
        });
        add("single", [](TrainConfig& c) {
            c.queue_mode = QueueMode::Single;
            c.importance_mode = ImportanceMode::Scored;
        });
    } else if (grid == "weights") {
        const double sweep[][3] = {{0.1, 0.1, 0.8}, {0.0, 0.0, 1.0}, {0.2, 0.2, 0.6}, {0.5, 0.5, 0.0}};
        for (const auto& s : sweep) {
            add("a=" + std::to_string(s[0]).substr(0, 3) + ",b=" + std::to_string(s[1]).substr(0, 3) +
                    ",d=" + std::to_string(s[2]).substr(0, 3),
                [&](TrainConfig& c) {
                    c.weights.alpha = s[0];
                    c.weights.beta = s[1];
                    c.weights.delta = s[2];
                });
        }
    } else if (grid == "queue-size") {
        for (std::size_t t : {16, 64, 192, 512}) {
            add("T=" + std::to_string(t), [t](TrainConfig& c) { c.queue_length = t; });
        }
    } else {
        throw ConfigError("ablate: unknown grid '" + grid + "'");
    }

    std::vector<AblationRun> runs;
    for (std::uint64_t seed : seeds) {
        for (const auto& [label, cfg] : variants) {
            AblationRun r;
            r.grid = grid;
            r.label = label;
            r.seed = seed;
            r.config = cfg;
            r.config.param_seed = seed;
            r.config.shuffle_seed = seed;
            runs.push_back(std::move(r));
        }
    }
    return runs;
}

}  // namespace mqmc::harness
