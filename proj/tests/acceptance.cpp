// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
// Runs the full-scale experiment (both face styles) in --work-dir.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "msr/experiment.hpp"
#include "msr/random.hpp"

using namespace msr;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void verdict(bool ok, const char* name, const std::string& summary) {
    std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name, summary.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

void detail(const std::string& s) {
    std::printf("      %s\n", s.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// "intensity 0.35: 5/27" per mark intensity, from the trial records.
std::string detection_by_intensity(const fs::path& trials) {
    std::map<double, std::pair<int, int>> by;
    std::ifstream in(trials);
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        if (!j.at("marked").get<bool>()) continue;
        auto& [hit, n] = by[j.at("mark").at("intensity").get<double>()];
        hit += j.at("detected").get<bool>();
        ++n;
    }
    std::string out;
    for (const auto& [v, hn] : by) {
        out += (out.empty() ? "" : ", ") + fmt("%.2f", v) + ": " + std::to_string(hn.first) + "/" + std::to_string(hn.second);
    }
    return out;
}

const char* kind_name(ModelKind k) { return k == ModelKind::Autoencoder ? "autoencoder" : "decoder"; }

// --- criteria computed without the experiment run --------------------------

void check_oracles() {
    Rng rng(1001);
    // Streaming statistics vs explicit two-pass sums.
    double worst_stats = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(400));
        std::vector<Raster<double>> xs;
        for (int k = 0; k < n; ++k) {
            Raster<double> r(8, 8);
            for (auto& v : r.pixels()) v = 0.2 + 0.1 * rng.uniform();
            xs.push_back(std::move(r));
        }
        const ErrorStats s = calibrate_stats(xs, 0.0);
        for (std::size_t i = 0; i < s.mu.size(); ++i) {
            long double sum = 0;
            for (const auto& x : xs) sum += x[i];
            const long double mean = sum / n;
            long double ss = 0;
            for (const auto& x : xs) ss += (x[i] - mean) * (x[i] - mean);
            const double var = static_cast<double>(ss / (n - 1));
            worst_stats = std::max({worst_stats, std::abs(s.mu[i] - static_cast<double>(mean)), std::abs(s.sigma2[i] - var)});
        }
    }

    // Connected components vs stack flood fill on 1000 random masks.
    int cc_mismatch = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int h = 1 + static_cast<int>(rng.below(32)), w = 1 + static_cast<int>(rng.below(32));
        const double density = rng.uniform(0.05, 0.7);
        Mask m(h, w);
        for (auto& v : m.pixels()) v = rng.uniform() < density;
        const int conn = trial % 2 ? 4 : 8;
        std::vector<int> label(m.size(), -1);
        std::vector<std::vector<Pixel>> oracle;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                if (!m(r, c) || label[static_cast<std::size_t>(r * w + c)] >= 0) continue;
                oracle.emplace_back();
                std::vector<Pixel> stack{{r, c}};
                while (!stack.empty()) {
                    const Pixel p = stack.back();
                    stack.pop_back();
                    if (!m.contains(p.row, p.col) || !m(p.row, p.col)) continue;
                    int& l = label[static_cast<std::size_t>(p.row * w + p.col)];
                    if (l >= 0) continue;
                    l = static_cast<int>(oracle.size()) - 1;
                    oracle.back().push_back(p);
                    for (int dr = -1; dr <= 1; ++dr)
                        for (int dc = -1; dc <= 1; ++dc)
                            if ((dr || dc) && (conn == 8 || !(dr && dc))) stack.push_back({p.row + dr, p.col + dc});
                }
            }
        auto got = connected_components(m, conn);
        for (auto* set : {&got, &oracle}) {
            for (auto& comp : *set) std::sort(comp.begin(), comp.end());
            std::sort(set->begin(), set->end());
        }
        cc_mismatch += got != oracle;
    }

    // Precision on the constructed overlap cases.
    const GroundTruth truth = inject_mark(Image(64, 64), {{10, 10}, 14, 14, 0.9}).second;
    auto block = [](int top, int left, int rows, int cols) {
        std::vector<Pixel> px;
        for (int r = top; r < top + rows; ++r)
            for (int c = left; c < left + cols; ++c) px.push_back({r, c});
        return px;
    };
    const double p_exact = precision(block(10, 10, 14, 14), truth).score;
    const double p_half = precision(block(10, 10, 14, 28), truth).score;
    const double p_none = precision(block(40, 40, 14, 14), truth).score;

    const bool ok = worst_stats <= 1e-12 && cc_mismatch == 0 && p_exact == 1.0 && p_half == 0.5 && p_none == 0.0;
    verdict(ok, "oracle-equivalence",
            "stats max |dev| " + fmt("%.2e", worst_stats) + " (<= 1e-12), components " +
                std::to_string(1000 - cc_mismatch) + "/1000 masks identical, precision {" + fmt("%g", p_exact) + ", " +
                fmt("%g", p_half) + ", " + fmt("%g", p_none) + "}");
}

void check_gradients() {
    using namespace nn;
    Rng rng(2002);
    const Activation acts[] = {Activation::Identity, Activation::Tanh, Activation::Sigmoid};
    double worst = 0.0;
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<LayerSpec> specs;
        std::size_t in = 1 + rng.below(6);
        const int depth = 1 + static_cast<int>(rng.below(3));
        for (int l = 0; l < depth; ++l) {
            const std::size_t out = 1 + rng.below(6);
            specs.push_back({in, out, acts[rng.below(3)]});
            in = out;
        }
        Network net = Network::glorot(specs, rng.next());
        const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.below(4));
        Eigen::MatrixXd x(static_cast<Eigen::Index>(specs.front().input_size), batch);
        Eigen::MatrixXd y(static_cast<Eigen::Index>(specs.back().output_size), batch);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(0, 1);
        const auto cache = net.forward(x);
        const Gradients g = net.backward(cache, mse_gradient(cache.output(), y));
        auto compare = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = mse_loss(net.predict(x), y);
            param = keep - h;
            const double down = mse_loss(net.predict(x), y);
            param = keep;
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8}));
        };
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            auto& layer = net.mutable_layers()[l];
            for (Eigen::Index i = 0; i < layer.weights.size(); ++i) compare(layer.weights.data()[i], g.weights[l].data()[i]);
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) compare(layer.bias[i], g.bias[l][i]);
        }
    }
    verdict(worst < 1e-4, "gradient-correctness",
            "max relative deviation " + fmt("%.2e", worst) + " over 100 random networks (< 1e-4)");
}

void check_adam() {
    using namespace nn;
    Network net({LayerSpec{1, 1, Activation::Identity}});
    net.mutable_layers()[0].weights(0, 0) = 1.0;
    Gradients g = net.zero_gradients();
    g.weights[0](0, 0) = 2.0;
    AdamState st = AdamState::fresh(net);
    adam_step(net, g, st, 0.005);
    const double theta = net.layers()[0].weights(0, 0);

    Network z = Network::glorot({LayerSpec{4, 3, Activation::Tanh}, LayerSpec{3, 2, Activation::Sigmoid}}, 7);
    const Network before = z;
    AdamState zs = AdamState::fresh(z);
    adam_step(z, z.zero_gradients(), zs, 0.005);
    bool bit_exact = true;
    for (std::size_t l = 0; l < z.layer_count(); ++l) {
        const auto& a = z.layers()[l];
        const auto& b = before.layers()[l];
        bit_exact &= std::memcmp(a.weights.data(), b.weights.data(), sizeof(double) * a.weights.size()) == 0;
        bit_exact &= std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) == 0;
    }
    verdict(std::abs(theta - 0.995) <= 1e-9 && bit_exact, "adam-correctness",
            "first step theta = " + fmt("%.12f", theta) + " (0.995 +/- 1e-9), zero-gradient step " +
                (bit_exact ? "bit-exact no-op" : "CHANGED parameters"));
}

// --- experiment-backed criteria -------------------------------------------

struct StyleRun {
    std::map<ModelKind, TrainResult> train;
    std::map<ModelKind, PrecisionCurve> curves;
    ReachResult reach;
    double gen_seconds = 0, reach_seconds = 0, msr_seconds = 0;
    std::map<ModelKind, double> eval_seconds;
};

// First epoch index from which every later epoch-to-epoch change stays
// below `tol`; -1 when the final step still moves by tol or more.
int steady_from(const std::vector<double>& y, double tol) {
    if (y.size() < 2) return -1;
    int from = 0;
    for (std::size_t i = 1; i < y.size(); ++i) {
        if (std::abs(y[i] - y[i - 1]) >= tol) from = static_cast<int>(i);
    }
    return from == static_cast<int>(y.size()) - 1 && std::abs(y.back() - y[y.size() - 2]) >= tol ? -1 : from;
}

bool files_identical(const fs::path& a, const fs::path& b) {
    return fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b);
}

std::size_t compare_trees(const fs::path& a, const fs::path& b, std::vector<std::string>& differing) {
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), a);
        const std::string ext = rel.extension().string();
        if (ext != ".csv" && ext != ".bin") continue;
        ++compared;
        if (!files_identical(e.path(), b / rel)) differing.push_back(rel.string());
    }
    return compared;
}

}  // namespace

int main(int argc, char** argv) {
    fs::path work = fs::temp_directory_path() / "msr_acceptance";
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::strcmp(argv[i], "--work-dir") == 0) work = argv[i + 1];
    }
    fs::remove_all(work);
    fs::create_directories(work);

    check_oracles();
    check_gradients();
    check_adam();

    ExperimentConfig cfg = ExperimentConfig::defaults();
    cfg.out_dir = work / "run";
    const RunLayout layout(cfg.out_dir);
    std::map<FaceStyleId, StyleRun> runs;
    std::vector<MsrSummary> msr;
    double msr_pipeline_seconds = 0.0;
    const auto t_all = std::chrono::steady_clock::now();

    try {
        for (FaceStyleId sid : {FaceStyleId::A, FaceStyleId::B}) {
            ExperimentConfig c = cfg;
            c.face_style = sid;
            StyleRun& run = runs[sid];
            auto t = std::chrono::steady_clock::now();
            cmd_gen_data(c, layout);
            run.gen_seconds = since(t);
            for (ModelKind k : {ModelKind::Decoder, ModelKind::Autoencoder}) run.train[k] = cmd_train(c, layout, k);
            t = std::chrono::steady_clock::now();
            run.reach = cmd_train_reach(c, layout);
            run.reach_seconds = since(t);
            // Novelty curves are scored on style A; style B serves the
            // robustness (retrained second face) trials.
            if (sid == FaceStyleId::A) {
                for (ModelKind k : {ModelKind::Decoder, ModelKind::Autoencoder}) {
                    t = std::chrono::steady_clock::now();
                    run.curves[k] = cmd_eval_novelty(c, layout, k, true, true);
                    run.eval_seconds[k] = since(t);
                }
            }
        }
        const auto t = std::chrono::steady_clock::now();
        const MsrResult r = cmd_run_msr(cfg, layout);
        const double trials_seconds = since(t);
        msr = r.styles;
        for (const auto& w : r.warnings) detail("warning: " + w);
        const ModelKind trial_kind = cfg.trials.model;
        for (auto& [sid, run] : runs) {
            msr_pipeline_seconds += run.gen_seconds + run.train[trial_kind].seconds + run.reach_seconds;
        }
        msr_pipeline_seconds += trials_seconds;
        cmd_report(layout);
    } catch (const std::exception& e) {
        std::printf("FAIL  experiment-run: %s\n", e.what());
        return 1;
    }
    const double total_seconds = since(t_all);

    // Reconstruction.
    {
        bool ok = true;
        double worst_mse = 0.0, worst_time = 0.0;
        for (auto& [sid, run] : runs) {
            for (auto& [k, tr] : run.train) {
                const double mse = tr.history.test_loss.back();
                ok &= tr.history.test_loss.size() == 50 && mse <= 0.015 && tr.seconds <= 300.0;
                worst_mse = std::max(worst_mse, mse);
                worst_time = std::max(worst_time, tr.seconds);
            }
        }
        verdict(ok, "reconstruction",
                "worst held-out MSE " + fmt("%.5f", worst_mse) + " (<= 0.015) after 50 full-pass epochs, slowest model " +
                    fmt("%.1f", worst_time) + " s (<= 300 s)");
        for (auto& [sid, run] : runs)
            for (auto& [k, tr] : run.train)
                detail(std::string("style ") + (sid == FaceStyleId::A ? "A " : "B ") + kind_name(k) + ": test MSE " +
                       fmt("%.5f", tr.history.test_loss.back()) + ", train MSE " + fmt("%.5f", tr.history.train_loss.back()) +
                       ", " + fmt("%.1f", tr.seconds) + " s" +
                       (tr.probe ? ", latent R^2 yaw " + fmt("%.3f", tr.probe->r2_yaw) + " pitch " + fmt("%.3f", tr.probe->r2_pitch) : ""));
    }

    const StyleRun& a = runs[FaceStyleId::A];
    auto final_of = [](const std::vector<double>& v) { return v.empty() ? std::nan("") : v.back(); };

    // Novelty convergence.
    {
        bool ok = true;
        std::string summary;
        for (ModelKind k : {ModelKind::Autoencoder, ModelKind::Decoder}) {
            const auto& c = a.curves.at(k);
            const int from = steady_from(c.weighted, 0.01);
            ok &= from >= 0 && from < 20;
            summary += std::string(summary.empty() ? "" : ", ") + kind_name(k) + " steady from epoch " + std::to_string(from);
            double max_late = 0.0;
            for (std::size_t i = 20; i < c.weighted.size(); ++i) max_late = std::max(max_late, std::abs(c.weighted[i] - c.weighted[i - 1]));
            std::string curve;
            for (std::size_t i = 0; i < c.weighted.size(); ++i) curve += fmt(i ? " %.3f" : "%.3f", c.weighted[i]);
            detail(std::string(kind_name(k)) + " weighted precision per epoch: " + curve);
            detail(std::string(kind_name(k)) + " max |delta| after epoch 20: " + fmt("%.4f", max_late) + ", eval " +
                   fmt("%.1f", a.eval_seconds.at(k)) + " s");
        }
        verdict(ok, "novelty-convergence", summary + " (|delta| < 0.01 per epoch, before epoch 20)");
    }

    // Variance ablation.
    {
        bool ok = true;
        std::string summary;
        for (ModelKind k : {ModelKind::Autoencoder, ModelKind::Decoder}) {
            const auto& c = a.curves.at(k);
            const double w = final_of(c.weighted), u = final_of(c.unweighted);
            ok &= u < w;
            summary += std::string(summary.empty() ? "" : ", ") + kind_name(k) + " weighted " + fmt("%.3f", w) +
                       " vs Sigma=I " + fmt("%.3f", u);
        }
        verdict(ok, "variance-ablation", summary + " (Sigma=I strictly lower, n=" + std::to_string(a.curves.at(ModelKind::Decoder).count) + ")");
    }

    // Architecture parity.
    {
        const double ae = final_of(a.curves.at(ModelKind::Autoencoder).weighted);
        const double dec = final_of(a.curves.at(ModelKind::Decoder).weighted);
        verdict(std::abs(ae - dec) <= 0.15, "architecture-parity",
                "autoencoder " + fmt("%.3f", ae) + ", decoder " + fmt("%.3f", dec) + ", |difference| " +
                    fmt("%.3f", std::abs(ae - dec)) + " (<= 0.15)");
    }

    // Reach accuracy.
    {
        bool ok = true;
        double worst = 0.0;
        for (auto& [sid, run] : runs) {
            ok &= run.reach.grid_rms < 2.0;
            worst = std::max(worst, run.reach.grid_rms);
            std::string per;
            for (double v : run.reach.grid_rms_per_joint) per += fmt(" %.3f", v);
            detail(std::string("style ") + (sid == FaceStyleId::A ? "A" : "B") + ": grid RMS " + fmt("%.3f", run.reach.grid_rms) +
                   " deg, per joint" + per + ", hold-out RMS " + fmt("%.3f", run.reach.training.holdout_rms) + " deg");
        }
        verdict(ok, "reach-accuracy", "worst grid RMS joint error " + fmt("%.3f", worst) + " deg (< 2 deg, 2 px grid over the face)");
    }

    // End-to-end.
    {
        bool ok = msr.size() == 2 && msr_pipeline_seconds <= 600.0;
        std::string summary;
        for (const auto& s : msr) {
            ok &= s.trials == 100 && s.detection_rate >= 0.8 && s.false_positive_rate <= 0.1;
            summary += std::string(summary.empty() ? "" : "; ") + "style " + (s.style == FaceStyleId::A ? "A" : "B") +
                       " detection " + fmt("%.2f", s.detection_rate) + " FPR " + fmt("%.2f", s.false_positive_rate);
            detail(std::string("style ") + (s.style == FaceStyleId::A ? "A" : "B") + " (" + kind_name(s.model) + "): " +
                   std::to_string(s.detected) + "/" + std::to_string(s.trials) + " detected, " + std::to_string(s.reached) +
                   " reached, mean precision " + fmt("%.3f", s.mean_precision) + ", mean joint error " +
                   fmt("%.2f", s.mean_joint_error_deg) + " deg, false positives " + std::to_string(s.false_positives) + "/" +
                   std::to_string(s.unmarked_trials));
            detail(std::string("  detected by mark intensity: ") + detection_by_intensity(layout.trials(s.style)));
        }
        detail("pipeline for the trials (data, " + std::string(kind_name(cfg.trials.model)) + ", reach map, trials; both styles): " +
               fmt("%.1f", msr_pipeline_seconds) + " s; whole acceptance run so far " + fmt("%.1f", total_seconds) + " s");
        verdict(ok, "end-to-end-msr", summary + " (>= 0.8, <= 0.1), pipeline " + fmt("%.0f", msr_pipeline_seconds) + " s (<= 600 s)");
    }

    // Reproducibility: a second run directory with the same config and seed.
    {
        std::vector<std::string> differing;
        std::size_t compared = 0;
        try {
            // Full scale: retrain style A models and reach map.
            ExperimentConfig c = cfg;
            c.out_dir = work / "rerun";
            const RunLayout second(c.out_dir);
            cmd_gen_data(c, second);
            for (ModelKind k : {ModelKind::Decoder, ModelKind::Autoencoder}) cmd_train(c, second, k);
            cmd_train_reach(c, second);
            for (ModelKind k : {ModelKind::Decoder, ModelKind::Autoencoder}) {
                for (const fs::path& p : {layout.model(FaceStyleId::A, k), layout.loss_csv(FaceStyleId::A, k)}) {
                    ++compared;
                    if (!files_identical(p, second.root() / fs::relative(p, layout.root()))) differing.push_back(p.string());
                }
            }
            for (const fs::path& p : {layout.reach_model(FaceStyleId::A), layout.reach_loss_csv(FaceStyleId::A)}) {
                ++compared;
                if (!files_identical(p, second.root() / fs::relative(p, layout.root()))) differing.push_back(p.string());
            }
            // Every CSV and model of a complete (reduced-size) pipeline, run twice.
            for (const char* name : {"small_1", "small_2"}) {
                ExperimentConfig s = cfg;
                s.appearance_size = 200;
                s.reach_size = 100;
                s.train.epochs = 6;
                s.trials.count = 10;
                s.trials.unmarked_count = 10;
                s.out_dir = work / name;
                const RunLayout l(s.out_dir);
                for (FaceStyleId sid : {FaceStyleId::A, FaceStyleId::B}) {
                    s.face_style = sid;
                    cmd_gen_data(s, l);
                    for (ModelKind k : {ModelKind::Decoder, ModelKind::Autoencoder}) {
                        cmd_train(s, l, k);
                        cmd_eval_novelty(s, l, k, true, true);
                    }
                    cmd_train_reach(s, l);
                }
                cmd_run_msr(s, l);
            }
            compared += compare_trees(work / "small_1", work / "small_2", differing);
        } catch (const std::exception& e) {
            differing.push_back(std::string("error: ") + e.what());
        }
        for (const auto& d : differing) detail("differs: " + d);
        verdict(differing.empty() && compared > 0, "reproducibility",
                std::to_string(compared - std::min(compared, differing.size())) + "/" + std::to_string(compared) +
                    " metrics CSVs and model files byte-identical across two runs");
    }

    std::printf("SUMMARY  %d criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
