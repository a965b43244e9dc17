// csr-lab: dataset generation, training, evaluation, sweeps and theorem
// checks over the counterfactual-sensitivity training laboratory.
//
// Exit codes: 0 ok, 2 config error, 3 check failure, 4 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "csr/dataset_io.hpp"
#include "csr/experiment.hpp"
#include "csr/metrics.hpp"
#include "csr/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitIo = 4;

struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

struct Options {
    std::string config_path;
    std::string out_dir = "runs";
    std::string seeds_raw = "1,2,3";
    std::vector<std::string> sets;
};

std::vector<std::uint64_t> parse_seeds(const std::string& raw) {
    std::vector<std::uint64_t> seeds;
    std::string tok;
    for (char c : raw + ",") {
        if (c == ',') {
            if (!tok.empty()) seeds.push_back(std::stoull(tok));
            tok.clear();
        } else {
            tok += c;
        }
    }
    if (seeds.empty()) throw CliError(kExitConfig, "no seeds given");
    return seeds;
}

nlohmann::json load_config(const Options& opt) {
    nlohmann::json cfg = nlohmann::json::object();
    if (!opt.config_path.empty()) {
        try {
            cfg = csr::read_json_file(opt.config_path);
        } catch (const csr::IoError& e) {
            throw CliError(kExitIo, e.what());
        } catch (const nlohmann::json::exception& e) {
            throw CliError(kExitConfig, std::string("config parse error: ") + e.what());
        }
    }
    for (const std::string& kv : opt.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CliError(kExitConfig, "--set expects key=value, got: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(val);
        } catch (const nlohmann::json::exception&) {
            parsed = val;  // plain string
        }
        // dotted path into the config tree
        nlohmann::json* node = &cfg;
        std::string part;
        std::vector<std::string> parts;
        for (char c : key + ".") {
            if (c == '.') {
                if (!part.empty()) parts.push_back(part);
                part.clear();
            } else {
                part += c;
            }
        }
        if (parts.empty()) throw CliError(kExitConfig, "--set: empty key");
        for (std::size_t i = 0; i + 1 < parts.size(); ++i)
            node = &(*node)[parts[i]];
        (*node)[parts.back()] = parsed;
    }
    return cfg;
}

csr::GeneratorConfig generator_config(const nlohmann::json& cfg) {
    csr::GeneratorConfig gen;
    if (cfg.contains("generator"))
        gen = csr::GeneratorConfig::from_json(cfg.at("generator"));
    return gen;
}

csr::TrainConfig train_config(const nlohmann::json& cfg) {
    csr::TrainConfig t;
    if (cfg.contains("train")) t = csr::TrainConfig::from_json(cfg.at("train"));
    return t;
}

int config_int(const nlohmann::json& cfg, const std::string& section,
               const std::string& key, int fallback) {
    if (cfg.contains(section) && cfg.at(section).contains(key))
        return cfg.at(section).at(key).get<int>();
    return fallback;
}

std::string config_str(const nlohmann::json& cfg, const std::string& section,
                       const std::string& key) {
    if (cfg.contains(section) && cfg.at(section).contains(key))
        return cfg.at(section).at(key).get<std::string>();
    return "";
}

std::string start_run(const Options& opt, const std::string& command,
                      const nlohmann::json& cfg) {
    const std::string dir = csr::make_run_dir(opt.out_dir, command);
    csr::write_json_file(dir + "/config.json", cfg);
    return dir;
}

void finish_run(const std::string& dir, const std::string& command, bool pass,
                nlohmann::json extra) {
    extra["command"] = command;
    extra["pass"] = pass;
    csr::write_json_file(dir + "/summary.json", extra);
    std::cout << (pass ? "PASS " : "FAIL ") << command << "  (" << dir << ")\n";
}

std::vector<csr::ReasoningTask> load_or_generate(const nlohmann::json& cfg,
                                                 const std::string& section,
                                                 const std::string& key, int n) {
    const std::string path = config_str(cfg, section, key);
    if (!path.empty()) {
        if (!std::filesystem::exists(path))
            throw CliError(kExitIo, "dataset not found: " + path);
        return csr::read_dataset_jsonl(path);
    }
    return csr::generate_dataset(generator_config(cfg), n);
}

csr::ModelParams load_checkpoint(const nlohmann::json& cfg, const std::string& section) {
    const std::string path = config_str(cfg, section, "checkpoint");
    if (path.empty())
        throw CliError(kExitConfig, "config key " + section + ".checkpoint is required");
    if (!std::filesystem::exists(path))
        throw CliError(kExitIo, "checkpoint not found: " + path);
    return csr::ModelParams::from_checkpoint(csr::read_json_file(path));
}

int cmd_gen(const Options& opt, const nlohmann::json& cfg) {
    const csr::GeneratorConfig gen = generator_config(cfg);
    const int n = config_int(cfg, "generator", "n", 1000);
    const std::string dir = start_run(opt, "gen", cfg);

    csr::DatasetManifest manifest;
    const auto tasks = csr::generate_dataset(gen, n, &manifest);
    csr::write_dataset_jsonl(dir + "/dataset.jsonl", tasks);
    csr::write_json_file(dir + "/manifest.json", manifest.to_json());
    const auto hash = csr::file_content_hash(dir + "/dataset.jsonl");

    std::cout << "dataset " << dir << "/dataset.jsonl  n=" << n << "  hash=" << std::hex
              << hash << std::dec << "\n";
    finish_run(dir, "gen", true,
               {{"dataset_hash", hash}, {"manifest_hash", manifest.config_hash}});
    return kExitOk;
}

int cmd_train(const Options& opt, const nlohmann::json& cfg,
              const std::vector<std::uint64_t>& seeds) {
    const csr::GeneratorConfig gen = generator_config(cfg);
    csr::TrainConfig train = train_config(cfg);
    train.seed = seeds.front();
    const int train_n = config_int(cfg, "generator", "train_n", 5000);
    const std::string dir = start_run(opt, "train", cfg);

    const auto tasks = load_or_generate(cfg, "train", "dataset", train_n);
    const csr::Vocabulary vocab = gen.vocabulary();
    const csr::TrainResult result = csr::train_run(tasks, train, vocab, dir);

    const auto hash = csr::file_content_hash(dir + "/checkpoint.json");
    std::cout << "checkpoint " << dir << "/checkpoint.json  hash=" << std::hex << hash
              << std::dec << "  alpha=" << result.ledger.measured_alpha()
              << "  overhead=" << result.ledger.forward_overhead() << "\n";
    finish_run(dir, "train", true,
               {{"checkpoint_hash", hash},
                {"ledger", result.ledger.summary_json()}});
    return kExitOk;
}

int cmd_eval(const Options& opt, const nlohmann::json& cfg,
             const std::vector<std::uint64_t>& seeds) {
    const csr::GeneratorConfig gen = generator_config(cfg);
    const int eval_n = config_int(cfg, "generator", "eval_n", 1000);
    const std::string dir = start_run(opt, "eval", cfg);

    const csr::ModelParams params = load_checkpoint(cfg, "eval");
    const auto tasks = load_or_generate(cfg, "eval", "dataset", eval_n);
    const csr::Vocabulary vocab = gen.vocabulary();

    csr::MetricsConfig mc;
    mc.seed = seeds.front();
    const csr::NeuralAnswerModel model(params, mc.answer_temp_eval);
    std::vector<csr::ProbeRow> rows;
    const csr::MetricsReport report = csr::evaluate(model, tasks, vocab, mc, nullptr, &rows);

    csr::write_json_file(dir + "/metrics.json", report.to_json());
    std::ofstream(dir + "/probes.csv") << csr::probe_rows_csv(rows);
    std::cout << "accuracy=" << report.accuracy
              << " cos=" << (report.cos.value ? std::to_string(*report.cos.value) : "n/a")
              << " sis=" << (report.sis.value ? std::to_string(*report.sis.value) : "n/a")
              << " ece=" << report.ece << "\n";
    finish_run(dir, "eval", true, {{"metrics", report.to_json()}});
    return kExitOk;
}

int cmd_sweep(const Options& opt, const nlohmann::json& cfg,
              const std::vector<std::uint64_t>& seeds, csr::SweepKind kind,
              const std::string& command, std::vector<double> default_grid) {
    csr::SweepSettings settings;
    settings.gen = generator_config(cfg);
    settings.base = train_config(cfg);
    settings.seeds = seeds;
    settings.train_n = config_int(cfg, "sweep", "train_n", 5000);
    settings.eval_n = config_int(cfg, "sweep", "eval_n", 1000);
    settings.workers = csr::env_worker_count();

    std::vector<double> grid = default_grid;
    if (cfg.contains("sweep") && cfg.at("sweep").contains("grid"))
        grid = cfg.at("sweep").at("grid").get<std::vector<double>>();
    if (grid.empty() && kind != csr::SweepKind::divergence &&
        kind != csr::SweepKind::editor)
        throw CliError(kExitConfig, "sweep grid is empty");

    const std::string dir = start_run(opt, command, cfg);
    settings.out_dir = dir;
    const csr::SweepReport report = csr::sweep(kind, grid, settings);

    bool pass = true;
    if (report.verdicts_emitted) {
        for (const auto& [name, ok] : report.verdicts) {
            std::cout << "verdict " << name << ": " << (ok ? "yes" : "no") << "\n";
            if (name != "learned_beats_random_by_5pts" &&
                name != "learned_accept_rate_exceeds_random")
                pass = pass && ok;
        }
    } else {
        std::cout << "verdicts suppressed (need >= 3 seeds)\n";
    }
    if (!report.argmax_label.empty())
        std::cout << "argmax cell: " << report.argmax_label << "\n";
    finish_run(dir, command, pass, {{"report", report.to_json()}});
    return pass ? kExitOk : kExitCheckFailed;
}

int cmd_check_dominance(const Options& opt, const nlohmann::json& cfg,
                        const std::vector<std::uint64_t>& seeds) {
    const csr::GeneratorConfig gen = generator_config(cfg);
    const std::string dir = start_run(opt, "check-dominance", cfg);
    const csr::ModelParams params = load_checkpoint(cfg, "check");
    const auto tasks = load_or_generate(cfg, "check", "dataset",
                                        config_int(cfg, "check", "n", 1000));
    std::vector<csr::ReasoningTask> control;
    const std::string control_path = config_str(cfg, "check", "control_dataset");
    if (!control_path.empty()) control = csr::read_dataset_jsonl(control_path);

    const csr::DominanceReport report = csr::check_dominance(
        params, tasks, control, gen.vocabulary(), config_int(cfg, "check", "n", 1000),
        seeds.front());
    csr::write_json_file(dir + "/dominance.json", report.to_json());
    if (report.refused) {
        std::cout << "refused: " << report.refusal_reason << "\n";
        finish_run(dir, "check-dominance", false, {{"report", report.to_json()}});
        return kExitCheckFailed;
    }
    std::cout << "mean CS=" << report.main.mean_cs << " COMP=" << report.main.mean_comp
              << " SUFF=" << report.main.mean_suff << "\n";
    finish_run(dir, "check-dominance", report.pass, {{"report", report.to_json()}});
    return report.pass ? kExitOk : kExitCheckFailed;
}

int cmd_check_noisy(const Options& opt, const nlohmann::json& cfg,
                    const std::vector<std::uint64_t>& seeds) {
    const csr::GeneratorConfig gen = generator_config(cfg);
    const std::string dir = start_run(opt, "check-noisy-verifier", cfg);
    const csr::ModelParams params = load_checkpoint(cfg, "check");
    const auto tasks = load_or_generate(cfg, "check", "dataset",
                                        config_int(cfg, "check", "n", 1000));
    std::vector<double> rates{0.0, 0.15, 0.3};
    if (cfg.contains("check") && cfg.at("check").contains("flip_rates"))
        rates = cfg.at("check").at("flip_rates").get<std::vector<double>>();
    const int n_per_cell = config_int(cfg, "check", "n_per_cell", 5000);

    const csr::NoisyVerifierCheck report = csr::check_noisy_verifier(
        params, tasks, gen.vocabulary(), rates, n_per_cell, seeds.front());
    csr::write_json_file(dir + "/noisy_verifier.json", report.to_json());
    for (const auto& cell : report.cells) {
        std::cout << "rate=" << cell.flip_invalid_rate << " q_hat=" << cell.q_hat
                  << " E[L_CSR]=" << cell.e_lcsr << " q*mu_A=" << cell.q_hat * cell.mu_a
                  << (cell.pass ? "  ok" : "  FAIL") << "\n";
    }
    finish_run(dir, "check-noisy-verifier", report.pass, {{"report", report.to_json()}});
    return report.pass ? kExitOk : kExitCheckFailed;
}

int cmd_check_shortcut(const Options& opt, const nlohmann::json& cfg,
                       const std::vector<std::uint64_t>& seeds) {
    csr::GeneratorConfig gen = generator_config(cfg);
    if (gen.shortcut_rate != 1.0)
        throw CliError(kExitConfig, "check-shortcut requires generator.shortcut_rate = 1");
    const csr::TrainConfig base = train_config(cfg);
    const int train_n = config_int(cfg, "check", "train_n", 5000);
    const int eval_n = config_int(cfg, "check", "eval_n", 1000);
    const std::string dir = start_run(opt, "check-shortcut", cfg);

    const csr::ShortcutReport report =
        csr::check_shortcut(gen, base, seeds, train_n, eval_n, dir);
    csr::write_json_file(dir + "/shortcut.json", report.to_json());
    if (report.refused) {
        std::cout << "refused: " << report.refusal_reason << "\n";
        finish_run(dir, "check-shortcut", false, {{"report", report.to_json()}});
        return kExitCheckFailed;
    }
    std::cout << "COS csr=" << report.mean_cos_csr
              << " baseline=" << report.mean_cos_baseline
              << "  reliance csr=" << report.mean_reliance_csr
              << " baseline=" << report.mean_reliance_baseline << "\n";
    finish_run(dir, "check-shortcut", report.pass, {{"report", report.to_json()}});
    return report.pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"csr-lab: counterfactual sensitivity training laboratory"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--config", opt.config_path, "JSON config file");
    app.add_option("--out", opt.out_dir, "output root directory");
    app.add_option("--seeds", opt.seeds_raw, "comma-separated seeds");
    app.add_option("--set", opt.sets, "override config key (dotted.path=value)");

    const std::vector<std::string> commands = {
        "gen",         "train",          "eval",
        "sweep-lambda", "sweep-noise",    "sweep-divergence",
        "sweep-depth", "ablate-editor",  "check-dominance",
        "check-noisy-verifier", "check-shortcut"};
    for (const std::string& name : commands) app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        const nlohmann::json cfg = load_config(opt);
        const auto seeds = parse_seeds(opt.seeds_raw);
        const std::string cmd = app.get_subcommands().front()->get_name();

        if (cmd == "gen") return cmd_gen(opt, cfg);
        if (cmd == "train") return cmd_train(opt, cfg, seeds);
        if (cmd == "eval") return cmd_eval(opt, cfg, seeds);
        if (cmd == "sweep-lambda")
            return cmd_sweep(opt, cfg, seeds, csr::SweepKind::lambda, cmd,
                             {0.1, 0.3, 0.5, 0.7, 1.0});
        if (cmd == "sweep-noise")
            return cmd_sweep(opt, cfg, seeds, csr::SweepKind::noise, cmd, {0.0, 0.2, 0.5});
        if (cmd == "sweep-divergence")
            return cmd_sweep(opt, cfg, seeds, csr::SweepKind::divergence, cmd, {});
        if (cmd == "sweep-depth")
            return cmd_sweep(opt, cfg, seeds, csr::SweepKind::depth, cmd, {1, 2, 3});
        if (cmd == "ablate-editor")
            return cmd_sweep(opt, cfg, seeds, csr::SweepKind::editor, cmd, {});
        if (cmd == "check-dominance") return cmd_check_dominance(opt, cfg, seeds);
        if (cmd == "check-noisy-verifier") return cmd_check_noisy(opt, cfg, seeds);
        if (cmd == "check-shortcut") return cmd_check_shortcut(opt, cfg, seeds);
        std::cerr << "unknown command: " << cmd << "\n";
        return kExitConfig;
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    } catch (const csr::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
}
