// fedmmd command-line front end. Links only the C API of libfedmmd.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "fedmmd.h"

namespace {

int report_failure(int rc, const char* what) {
    std::fprintf(stderr, "error: %s failed (%s): %s\n", what, fedmmd_status_name(rc),
                 fedmmd_last_error());
    return 1;
}

std::string join_seeds(const std::vector<uint64_t>& seeds) {
    std::string s = "[";
    for (size_t i = 0; i < seeds.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(seeds[i]);
    }
    return s + "]";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalty-based personalized FL simulator with adaptive MMD drift penalties"};
    app.set_version_flag("--version", std::string(fedmmd_version()));
    app.require_subcommand(1);

    // --- gen ---
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset directory");
    std::string gen_out = "data";
    double gen_alpha = 0.0, gen_beta = 0.0, gen_fraction = 0.8;
    int gen_clients = 8, gen_samples = 5000;
    uint64_t gen_seed = 7;
    double gen_dirichlet = -1.0;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--alpha", gen_alpha, "Model-variation scale");
    gen->add_option("--beta", gen_beta, "Feature-mean-variation scale");
    gen->add_option("--clients", gen_clients, "Number of clients");
    gen->add_option("--samples", gen_samples, "Samples per client");
    gen->add_option("--data-seed", gen_seed, "Generator seed");
    gen->add_option("--train-fraction", gen_fraction, "Train split fraction");
    gen->add_option("--dirichlet", gen_dirichlet,
                    "Re-partition by Dirichlet label skew with this concentration");

    // --- run ---
    auto* run = app.add_subcommand("run", "Run one experiment config");
    std::string run_config, run_out;
    int run_threads = 1;
    std::vector<uint64_t> run_seeds;
    std::string run_method, run_feature_kind, run_schedule;
    double run_lambda = -1.0, run_mu = -1.0;
    run->add_option("--config", run_config, "Experiment config JSON")->required();
    run->add_option("--out", run_out, "Results root directory");
    run->add_option("--threads", run_threads, "Worker threads");
    run->add_option("--seed", run_seeds, "Seed list override")->delimiter(',');
    run->add_option("--method", run_method, "Method override (fedavg|ditto|mrmtl)");
    run->add_option("--lambda", run_lambda, "Weight-drift coefficient override");
    run->add_option("--mu", run_mu, "Feature-drift coefficient override");
    run->add_option("--feature-kind", run_feature_kind,
                    "Feature penalty override (none|cosine|mkmmd|mmdd|mkmmd_fixed_uniform)");
    run->add_option("--schedule", run_schedule, "Kernel update schedule (every_step|every_k_steps)");

    // --- sweep ---
    auto* sweep = app.add_subcommand("sweep", "Run a hyperparameter grid");
    std::string sweep_config, sweep_out;
    int sweep_threads = 1;
    sweep->add_option("--config", sweep_config, "Sweep spec JSON (base + grid)")->required();
    sweep->add_option("--out", sweep_out, "Results root directory");
    sweep->add_option("--threads", sweep_threads, "Worker threads");

    // --- report ---
    auto* report = app.add_subcommand("report", "Emit tables and plot data from results");
    std::string report_results, report_out = "report";
    bool max_over_mu = false;
    report->add_option("--results", report_results, "Results root to scan")->required();
    report->add_option("--out", report_out, "Report output directory");
    report->add_flag("--max-over-mu", max_over_mu,
                     "Collapse the mu axis in lambda-sweep series");

    // --- verify ---
    auto* verify = app.add_subcommand("verify", "Run the oracle and property suites");
    std::string verify_level = "fast";
    verify->add_option("--level", verify_level, "fast|full")
        ->check(CLI::IsMember({"fast", "full"}));

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        std::string spec = "{\"alpha\":" + std::to_string(gen_alpha) +
                           ",\"beta\":" + std::to_string(gen_beta) +
                           ",\"clients\":" + std::to_string(gen_clients) +
                           ",\"samples_per_client\":" + std::to_string(gen_samples) +
                           ",\"data_seed\":" + std::to_string(gen_seed) +
                           ",\"train_fraction\":" + std::to_string(gen_fraction);
        if (gen_dirichlet > 0.0) spec += ",\"dirichlet_alpha\":" + std::to_string(gen_dirichlet);
        spec += "}";
        int rc = fedmmd_generate_dataset(spec.c_str(), gen_out.c_str());
        if (rc != FEDMMD_OK) return report_failure(rc, "gen");
        std::printf("dataset written to %s\n", gen_out.c_str());
        return 0;
    }

    if (run->parsed()) {
        fedmmd_experiment* e = nullptr;
        int rc = fedmmd_experiment_from_file(run_config.c_str(), &e);
        if (rc != FEDMMD_OK) return report_failure(rc, "config load");
        auto override_or_die = [&](const char* key, const std::string& value) {
            int orc = fedmmd_experiment_override(e, key, value.c_str());
            if (orc != FEDMMD_OK) {
                report_failure(orc, "override");
                fedmmd_experiment_free(e);
                std::exit(1);
            }
        };
        if (!run_seeds.empty()) override_or_die("seeds", join_seeds(run_seeds));
        if (!run_method.empty()) override_or_die("method", run_method);
        if (run_lambda >= 0.0) override_or_die("penalty.lambda", std::to_string(run_lambda));
        if (run_mu >= 0.0) override_or_die("penalty.mu", std::to_string(run_mu));
        if (!run_feature_kind.empty()) override_or_die("penalty.feature_kind", run_feature_kind);
        if (!run_schedule.empty()) override_or_die("penalty.schedule.kind", run_schedule);

        char* summary = nullptr;
        rc = fedmmd_experiment_run(e, run_out.empty() ? nullptr : run_out.c_str(), run_threads,
                                   &summary);
        if (summary) {
            std::printf("%s\n", summary);
            fedmmd_string_free(summary);
        }
        fedmmd_experiment_free(e);
        if (rc != FEDMMD_OK) return report_failure(rc, "run");
        return 0;
    }

    if (sweep->parsed()) {
        char* summary = nullptr;
        int rc = fedmmd_sweep_run(sweep_config.c_str(),
                                  sweep_out.empty() ? nullptr : sweep_out.c_str(), sweep_threads,
                                  &summary);
        if (summary) {
            std::printf("%s\n", summary);
            fedmmd_string_free(summary);
        }
        if (rc != FEDMMD_OK) return report_failure(rc, "sweep");
        return 0;
    }

    if (report->parsed()) {
        int rc = fedmmd_report_emit(report_results.c_str(), report_out.c_str(),
                                    max_over_mu ? 1 : 0);
        if (rc != FEDMMD_OK) return report_failure(rc, "report");
        std::printf("report written to %s\n", report_out.c_str());
        return 0;
    }

    if (verify->parsed()) {
        char* text = nullptr;
        int rc = fedmmd_self_check(verify_level == "full" ? 1 : 0, &text);
        if (text) {
            std::printf("%s", text);
            fedmmd_string_free(text);
        }
        return rc == FEDMMD_OK ? 0 : 1;
    }

    return 0;
}
