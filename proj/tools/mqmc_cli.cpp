// Command-line entry point: gen-data, train, eval, ablate, grad-check.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mqmc/harness/experiment.hpp"
#include "mqmc/util/binary.hpp"

using namespace mqmc;
using harness::ConfigError;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;

harness::TrainConfig build_config(const std::string& path, const std::vector<std::string>& sets,
                                  std::optional<std::uint64_t> steps) {
    harness::TrainConfig cfg = path.empty() ? harness::TrainConfig{} : harness::load_config(path);
    for (const std::string& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        harness::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (steps) cfg.steps = *steps;
    cfg.validate();
    return cfg;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mqmc: multi-queue momentum contrast for microvideo-product retrieval"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    data::GenConfig gcfg;
    std::string gen_out;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gcfg.seed, "Generator seed");
    gen->add_option("--pairs", gcfg.pairs, "Number of pairs");
    gen->add_option("--coarse", gcfg.coarse, "Coarse categories");
    gen->add_option("--children", gcfg.children, "Middle categories per coarse category");
    gen->add_option("--latent-dim", gcfg.latent_dim, "Latent dimension");
    gen->add_option("--visual-dim", gcfg.visual_dim, "Visual feature dimension");
    gen->add_option("--text-dim", gcfg.text_dim, "Text feature dimension");
    gen->add_option("--product-noise", gcfg.product_noise, "Product latent jitter");
    gen->add_option("--clutter", gcfg.clutter, "Unrelated prototype weight in microvideo latents");
    gen->add_option("--modality-noise", gcfg.modality_noise, "Additive feature noise");
    gen->add_option("--domain-shift", gcfg.domain_shift, "Microvideo feature-map perturbation");
    gen->add_option("--zipf", gcfg.zipf, "Category frequency exponent");

    // train
    auto* train = app.add_subcommand("train", "Train and evaluate one configuration");
    std::string config_path, data_dir, out_dir, resume_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> steps;
    bool quiet = false;
    train->add_option("--config", config_path, "key = value config file");
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--out", out_dir, "Artifact directory (metrics.jsonl, last.ckpt, best.ckpt)");
    train->add_option("--set", sets, "Override a config key: key=value (repeatable)");
    train->add_option("--steps", steps, "Override the number of training steps");
    train->add_option("--resume", resume_path, "Continue from a last.ckpt");
    train->add_flag("--quiet", quiet, "Only print test metrics");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ckpt_path, split_name = "test";
    eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    eval->add_option("--data", data_dir, "Dataset directory")->required();
    eval->add_option("--split", split_name, "test or validation")->check(CLI::IsMember({"test", "validation"}));

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run an ablation grid over several seeds");
    std::string grid = "queue";
    std::uint64_t seed_count = 5;
    ablate->add_option("--grid", grid, "modality, queue, weights, queue-size or all");
    ablate->add_option("--seeds", seed_count, "Number of seeds (1..N)");
    ablate->add_option("--config", config_path, "key = value config file");
    ablate->add_option("--data", data_dir, "Dataset directory")->required();
    ablate->add_option("--set", sets, "Override a config key: key=value (repeatable)");
    ablate->add_option("--steps", steps, "Override the number of training steps");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the combined objective");
    harness::ToyObjective toy;
    double eps = 1e-5, tol = 1e-4;
    gc->add_option("--seed", toy.seed, "Toy problem seed");
    gc->add_option("--eps", eps, "Central-difference step");
    gc->add_option("--tol", tol, "Relative error tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*gen) {
            gcfg.validate();
            data::generate(gcfg, gen_out);
            for (const char* f : {data::kManifestFile, data::kDescriptorFile, data::kMvVisualFile, data::kMvTextFile,
                                  data::kProdVisualFile, data::kProdTextFile}) {
                nlohmann::ordered_json j;
                j["file"] = f;
                std::string bytes = util::read_file((std::filesystem::path(gen_out) / f).string());
                // feature files end in their own CRC; report the payload's
                if (std::string_view(f).ends_with(".bin") && bytes.size() >= 4) bytes.resize(bytes.size() - 4);
                j["crc32"] = util::crc32(bytes);
                std::cout << j.dump() << '\n';
            }
            return kOk;
        }
        if (*train) {
            const harness::TrainConfig cfg = build_config(config_path, sets, steps);
            const data::Dataset ds = data::load(data_dir);
            harness::ExperimentOptions opts;
            opts.out_dir = out_dir;
            if (!quiet) opts.log = &std::cout;
            if (!resume_path.empty()) opts.resume = enc::load_checkpoint(resume_path);
            const harness::ExperimentResult r = harness::run_experiment(cfg, ds, opts);
            if (quiet) {
                std::cout << harness::metrics_json(r.test, harness::Direction::MvToProd, "test") << '\n'
                          << harness::metrics_json(r.test, harness::Direction::ProdToMv, "test") << '\n';
            }
            return kOk;
        }
        if (*eval) {
            const enc::Checkpoint ckpt = enc::load_checkpoint(ckpt_path);
            const harness::TrainConfig cfg = harness::parse_config(ckpt.config_text);
            const data::Dataset ds = data::load(data_dir);
            const data::DatasetSplit sp = data::split(ds, cfg.split_seed);
            harness::MetricsReport r = harness::evaluate(ckpt.params, ds, split_name == "test" ? sp.test : sp.validation,
                                                         harness::dims_for(cfg, ds), cfg.modality);
            r.config_hash = ckpt.config_hash;
            r.step = ckpt.step;
            std::cout << harness::metrics_json(r, harness::Direction::MvToProd, split_name) << '\n'
                      << harness::metrics_json(r, harness::Direction::ProdToMv, split_name) << '\n';
            return kOk;
        }
        if (*ablate) {
            const harness::TrainConfig base = build_config(config_path, sets, steps);
            const data::Dataset ds = data::load(data_dir);
            if (seed_count == 0) throw ConfigError("ablate: --seeds must be positive");
            std::vector<std::uint64_t> seeds;
            for (std::uint64_t s = 1; s <= seed_count; ++s) seeds.push_back(s);
            const std::vector<std::string> grids =
                grid == "all" ? harness::ablation_grids() : std::vector<std::string>{grid};
            for (const std::string& gname : grids) {
                std::map<std::string, std::vector<double>> rsums;
                std::vector<std::string> order;
                for (const harness::AblationRun& run : harness::ablation_grid(gname, base, seeds)) {
                    const harness::ExperimentResult r = harness::run_experiment(run.config, ds);
                    nlohmann::ordered_json j;
                    j["grid"] = run.grid;
                    j["label"] = run.label;
                    j["seed"] = run.seed;
                    j["config_hash"] = run.config.hash();
                    j["test_rsum"] = r.test.rsum();
                    j["mv->prod R@1"] = r.test.mv_to_prod.r1;
                    j["prod->mv R@1"] = r.test.prod_to_mv.r1;
                    std::cout << j.dump() << std::endl;
                    if (!rsums.count(run.label)) order.push_back(run.label);
                    rsums[run.label].push_back(r.test.rsum());
                }
                for (const std::string& label : order) {
                    nlohmann::ordered_json j;
                    j["grid"] = gname;
                    j["label"] = label;
                    j["median_test_rsum"] = median(rsums[label]);
                    std::cout << j.dump() << std::endl;
                }
            }
            return kOk;
        }
        if (*gc) {
            const num::GradCheckReport rep = harness::check_full_objective(toy, eps, tol);
            nlohmann::ordered_json j;
            j["max_rel_error"] = rep.max_rel_error;
            j["worst_param"] = rep.worst_param;
            j["worst_index"] = rep.worst_index;
            j["analytic"] = rep.worst_analytic;
            j["numeric"] = rep.worst_numeric;
            j["checked"] = rep.checked;
            j["passed"] = rep.passed;
            std::cout << j.dump() << '\n';
            return rep.passed ? kOk : kFailed;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const data::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const enc::CheckpointError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return kFailed;
}
