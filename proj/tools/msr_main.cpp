// msr: command-line front end for the mirror self-recognition experiment.
//
//   msr gen-data     --out run [--config cfg.json] [--seed N] [--face-style A|B]
//   msr train        --out run [--model autoencoder|decoder]    (both if omitted)
//   msr eval-novelty --out run [--model ...] [--no-variance]
//   msr train-reach  --out run
//   msr run-msr      --out run [--model ...] [--trials N]
//   msr report       --out run
//
// Exit codes: 0 ok, 1 unexpected failure, 2 invalid input or artifact
// conflict, 3 missing artifact.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msr/error.hpp"
#include "msr/experiment.hpp"

namespace {

using namespace msr;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string face_style;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "experiment config JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "master seed");
    sub->add_option("--out", c.out, "run directory");
    sub->add_option("--face-style", c.face_style, "face style")->check(CLI::IsMember({"A", "B"}));
}

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig::defaults() : load_config(c.config_path);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    if (!c.face_style.empty()) cfg.face_style = c.face_style == "B" ? FaceStyleId::B : FaceStyleId::A;
    cfg.validate();
    return cfg;
}

std::vector<ModelKind> kinds_of(const std::string& model) {
    if (model.empty()) return {ModelKind::Autoencoder, ModelKind::Decoder};
    return {parse_model_kind(model)};
}

const char* style_name(FaceStyleId s) { return s == FaceStyleId::A ? "A" : "B"; }

int run(int argc, char** argv) {
    CLI::App app{"Mirror self-recognition experiment harness"};
    app.set_version_flag("--version", std::string(library_version()));
    app.require_subcommand(1);

    Common common;
    std::string model;
    bool no_variance = false;
    std::optional<int> trials;

    auto* gen = app.add_subcommand("gen-data", "render the appearance and reach datasets");
    auto* train = app.add_subcommand("train", "train the generative appearance model(s)");
    auto* eval = app.add_subcommand("eval-novelty", "score novelty precision for every checkpoint");
    auto* reach = app.add_subcommand("train-reach", "train the centroid-to-joints map");
    auto* msr_cmd = app.add_subcommand("run-msr", "run simulated mark-test trials for both face styles");
    auto* report = app.add_subcommand("report", "consolidate run artifacts into report.json and plots");
    for (auto* s : {gen, train, eval, reach, msr_cmd, report}) add_common(s, common);
    for (auto* s : {train, eval, msr_cmd}) {
        s->add_option("--model", model, "appearance model")->check(CLI::IsMember({"autoencoder", "decoder"}));
    }
    eval->add_flag("--no-variance", no_variance, "only the Sigma = identity ablation");
    msr_cmd->add_option("--trials", trials, "marked trials per style (unmarked count follows)")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    ExperimentConfig cfg = resolve(common);
    const RunLayout layout(cfg.out_dir);

    if (*gen) {
        const auto r = cmd_gen_data(cfg, layout);
        std::printf("style %s: %zu train, %zu test, %zu reach samples (%zu files written)\n",
                    style_name(cfg.face_style), r.train, r.test, r.reach, r.files_written);
    } else if (*train) {
        for (ModelKind k : kinds_of(model)) {
            const auto r = cmd_train(cfg, layout, k);
            std::printf("%s style %s: train MSE %.5f, test MSE %.5f, %.1f s\n", std::string(to_string(k)).c_str(),
                        style_name(cfg.face_style), r.history.train_loss.back(),
                        r.history.test_loss.empty() ? 0.0 : r.history.test_loss.back(), r.seconds);
            if (r.probe) std::printf("  latent R^2: yaw %.3f, pitch %.3f\n", r.probe->r2_yaw, r.probe->r2_pitch);
        }
    } else if (*eval) {
        for (ModelKind k : kinds_of(model)) {
            const auto c = cmd_eval_novelty(cfg, layout, k, !no_variance, true);
            std::printf("%s style %s: %zu epochs scored over %zu samples\n", std::string(to_string(k)).c_str(),
                        style_name(cfg.face_style), c.epochs.size(), c.count);
            if (!c.weighted.empty()) std::printf("  final weighted precision   %.4f\n", c.weighted.back());
            if (!c.unweighted.empty()) std::printf("  final unweighted precision %.4f\n", c.unweighted.back());
        }
    } else if (*reach) {
        const auto r = cmd_train_reach(cfg, layout);
        std::printf("reach style %s: holdout RMS %.3f deg, grid RMS %.3f deg\n", style_name(cfg.face_style),
                    r.training.holdout_rms, r.grid_rms);
    } else if (*msr_cmd) {
        if (trials) {
            cfg.trials.count = *trials;
            cfg.trials.unmarked_count = *trials;
        }
        const std::optional<ModelKind> kind = model.empty() ? std::nullopt : std::optional(parse_model_kind(model));
        const auto r = cmd_run_msr(cfg, layout, kind);
        for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        for (const auto& s : r.styles) {
            std::printf("style %s (%s): detection %zu/%zu (%.2f), mean precision %.3f, reached %zu, "
                        "mean joint error %.2f deg, false positives %zu/%zu (%.2f)\n",
                        style_name(s.style), std::string(to_string(s.model)).c_str(), s.detected, s.trials,
                        s.detection_rate, s.mean_precision, s.reached, s.mean_joint_error_deg, s.false_positives,
                        s.unmarked_trials, s.false_positive_rate);
        }
    } else if (*report) {
        cmd_report(layout);
        std::printf("wrote %s\n", layout.report().string().c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const msr::MissingArtifactError& e) {
        std::fprintf(stderr, "msr: missing artifact: %s\n", e.what());
        return 3;
    } catch (const msr::ValidationError& e) {
        std::fprintf(stderr, "msr: invalid input: %s\n", e.what());
        return 2;
    } catch (const msr::ArtifactConflictError& e) {
        std::fprintf(stderr, "msr: %s\n", e.what());
        return 2;
    } catch (const msr::FormatError& e) {
        std::fprintf(stderr, "msr: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "msr: %s\n", e.what());
        return 1;
    }
}
