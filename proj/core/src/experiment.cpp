#include "msr/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "msr/plot.hpp"
#include "msr/random.hpp"

#ifndef MSR_VERSION_STRING
#define MSR_VERSION_STRING "0.0.0"
#endif

namespace msr {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view library_version() { return MSR_VERSION_STRING; }

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.train.full_pass = true;
    c.autoencoder = Architecture::default_for(ModelKind::Autoencoder);
    c.decoder = Architecture::default_for(ModelKind::Decoder);
    c.detector.max_pixel_value = 255.0;
    c.detector.divisor = SaliencyDivisor::StdDev;
    c.detector.refine_passes = 5;
    return c;
}

const Architecture& ExperimentConfig::architecture(ModelKind kind) const {
    return kind == ModelKind::Autoencoder ? autoencoder : decoder;
}

void ExperimentConfig::validate() const {
    env.validate();
    train.validate();
    detector.validate();
    reach.validate();
    if (appearance_size < kMinDatasetSize) {
        throw ValidationError("appearance_size must be >= " + std::to_string(kMinDatasetSize) + ", got " +
                              std::to_string(appearance_size));
    }
    if (reach_size < 10) throw ValidationError("reach_size must be >= 10, got " + std::to_string(reach_size));
    for (const Architecture* a : {&autoencoder, &decoder}) {
        for (std::size_t w : a->hidden) {
            if (w == 0) throw ValidationError("architecture widths must be >= 1");
        }
        if (!(a->adam_epsilon >= 0.0)) throw ValidationError("architecture adam_epsilon must be >= 0");
    }
    if (trials.count < 0 || trials.unmarked_count < 0) throw ValidationError("trial counts must be >= 0");
    if (trials.mark_sizes.empty()) throw ValidationError("trials.mark_sizes must not be empty");
    for (int s : trials.mark_sizes) {
        if (s < 1 || s > std::min(env.height, env.width)) {
            throw ValidationError("mark size " + std::to_string(s) + " does not fit the image");
        }
    }
    if (!(trials.reach_tolerance_deg > 0.0)) throw ValidationError("trials.reach_tolerance_deg must be > 0");
    if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be >= 1");
    if (saliency_dumps < 0) throw ValidationError("saliency_dumps must be >= 0");
    for (int e : eval_epochs) {
        if (e < 0 || e >= train.epochs) throw ValidationError("eval_epochs entry " + std::to_string(e) + " out of range");
    }
}

namespace {

std::string_view divisor_name(SaliencyDivisor d) {
    switch (d) {
        case SaliencyDivisor::Variance: return "variance";
        case SaliencyDivisor::StdDev: return "stddev";
        case SaliencyDivisor::None: return "none";
    }
    return "variance";
}

SaliencyDivisor parse_divisor(const std::string& s) {
    if (s == "variance") return SaliencyDivisor::Variance;
    if (s == "stddev") return SaliencyDivisor::StdDev;
    if (s == "none") return SaliencyDivisor::None;
    throw ValidationError("detector.divisor must be variance, stddev or none, got \"" + s + "\"");
}

/// Reads keys of one JSON object, rejecting unknown ones on finish().
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ValidationError(path_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        out = convert<T>(*it, path_ + "." + key);
    }

    template <typename T>
    void get_list(const char* key, std::vector<T>& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        if (!it->is_array()) throw ValidationError(path_ + "." + key + ": expected an array");
        out.clear();
        for (const auto& v : *it) out.push_back(convert<T>(v, path_ + "." + key + "[]"));
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ValidationError(path_ + ": unknown key \"" + k + "\"");
        }
    }

private:
    template <typename T>
    static T convert(const json& v, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValidationError(where + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ValidationError(where + ": expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ValidationError(where + ": expected an integer");
            const auto i = v.get<std::int64_t>();
            if (i < std::numeric_limits<T>::min() || i > std::numeric_limits<T>::max()) {
                throw ValidationError(where + ": integer out of range");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ValidationError(where + ": expected a number");
        } else {
            if (!v.is_string()) throw ValidationError(where + ": expected a string");
        }
        return v.get<T>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string, std::less<>> seen_;
};

json architecture_json(const Architecture& a) {
    return {{"hidden", a.hidden}, {"center_input", a.center_input}, {"mean_output_bias", a.mean_output_bias},
            {"adam_epsilon", a.adam_epsilon}};
}

void read_architecture(const json& j, const std::string& path, Architecture& a) {
    Fields f(j, path);
    f.get_list("hidden", a.hidden);
    f.get("center_input", a.center_input);
    f.get("mean_output_bias", a.mean_output_bias);
    f.get("adam_epsilon", a.adam_epsilon);
    f.finish();
}

json config_json(const ExperimentConfig& c) {
    json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["seed"] = c.seed;
    j["face_style"] = std::string(to_string(c.face_style));
    j["out_dir"] = c.out_dir.generic_string();
    j["env"] = {{"height", c.env.height},
                {"width", c.env.width},
                {"pixels_per_degree", c.env.pixels_per_degree},
                {"noise_amplitude", c.env.noise_amplitude},
                {"supersample", c.env.supersample},
                {"blur_sigma", c.env.blur_sigma},
                {"palette", c.env.palette},
                {"mark_size", c.env.mark_size}};
    j["dataset"] = {{"appearance_size", c.appearance_size}, {"reach_size", c.reach_size}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"lr0", c.train.lr0},
                  {"decay", c.train.decay},
                  {"decay_every", c.train.decay_every},
                  {"beta1", c.train.adam.beta1},
                  {"beta2", c.train.adam.beta2},
                  {"epsilon", c.train.adam.epsilon},
                  {"full_pass", c.train.full_pass}};
    j["architecture"] = {{"autoencoder", architecture_json(c.autoencoder)},
                         {"decoder", architecture_json(c.decoder)}};
    j["detector"] = {{"threshold_frac", c.detector.threshold_frac},
                     {"max_pixel_value", c.detector.max_pixel_value},
                     {"min_area", c.detector.min_area},
                     {"epsilon_var", c.detector.epsilon_var},
                     {"use_variance", c.detector.use_variance},
                     {"divisor", std::string(divisor_name(c.detector.divisor))},
                     {"connectivity", c.detector.connectivity},
                     {"refine_passes", c.detector.refine_passes}};
    j["reach"] = {{"hidden", c.reach.hidden},
                  {"lr", c.reach.lr},
                  {"iterations", c.reach.iterations},
                  {"holdout_frac", c.reach.holdout_frac},
                  {"beta1", c.reach.adam.beta1},
                  {"beta2", c.reach.adam.beta2},
                  {"epsilon", c.reach.adam.epsilon}};
    j["trials"] = {{"count", c.trials.count},
                   {"unmarked_count", c.trials.unmarked_count},
                   {"mark_sizes", c.trials.mark_sizes},
                   {"model", std::string(to_string(c.trials.model))},
                   {"reach_tolerance_deg", c.trials.reach_tolerance_deg}};
    j["checkpoint_every"] = c.checkpoint_every;
    j["saliency_dumps"] = c.saliency_dumps;
    j["eval_epochs"] = c.eval_epochs;
    return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c = ExperimentConfig::defaults();
    Fields root(j, "config");
    int schema = -1;
    root.get("schema_version", schema);
    if (schema != kConfigSchemaVersion) {
        throw ValidationError("config.schema_version must be " + std::to_string(kConfigSchemaVersion) +
                              ", got " + std::to_string(schema));
    }
    root.get("seed", c.seed);
    std::string style(to_string(c.face_style));
    root.get("face_style", style);
    c.face_style = parse_face_style(style);
    std::string out = c.out_dir.generic_string();
    root.get("out_dir", out);
    c.out_dir = out;

    if (const json* e = root.child("env")) {
        Fields f(*e, "config.env");
        f.get("height", c.env.height);
        f.get("width", c.env.width);
        f.get("pixels_per_degree", c.env.pixels_per_degree);
        f.get("noise_amplitude", c.env.noise_amplitude);
        f.get("supersample", c.env.supersample);
        f.get("blur_sigma", c.env.blur_sigma);
        f.get_list("palette", c.env.palette);
        f.get("mark_size", c.env.mark_size);
        f.finish();
    }
    if (const json* d = root.child("dataset")) {
        Fields f(*d, "config.dataset");
        f.get("appearance_size", c.appearance_size);
        f.get("reach_size", c.reach_size);
        f.finish();
    }
    if (const json* t = root.child("train")) {
        Fields f(*t, "config.train");
        f.get("epochs", c.train.epochs);
        f.get("batch_size", c.train.batch_size);
        f.get("lr0", c.train.lr0);
        f.get("decay", c.train.decay);
        f.get("decay_every", c.train.decay_every);
        f.get("beta1", c.train.adam.beta1);
        f.get("beta2", c.train.adam.beta2);
        f.get("epsilon", c.train.adam.epsilon);
        f.get("full_pass", c.train.full_pass);
        f.finish();
    }
    if (const json* a = root.child("architecture")) {
        Fields f(*a, "config.architecture");
        if (const json* x = f.child("autoencoder")) read_architecture(*x, "config.architecture.autoencoder", c.autoencoder);
        if (const json* x = f.child("decoder")) read_architecture(*x, "config.architecture.decoder", c.decoder);
        f.finish();
    }
    if (const json* d = root.child("detector")) {
        Fields f(*d, "config.detector");
        f.get("threshold_frac", c.detector.threshold_frac);
        f.get("max_pixel_value", c.detector.max_pixel_value);
        f.get("min_area", c.detector.min_area);
        f.get("epsilon_var", c.detector.epsilon_var);
        f.get("use_variance", c.detector.use_variance);
        std::string div(divisor_name(c.detector.divisor));
        f.get("divisor", div);
        c.detector.divisor = parse_divisor(div);
        f.get("connectivity", c.detector.connectivity);
        f.get("refine_passes", c.detector.refine_passes);
        f.finish();
    }
    if (const json* r = root.child("reach")) {
        Fields f(*r, "config.reach");
        f.get("hidden", c.reach.hidden);
        f.get("lr", c.reach.lr);
        f.get("iterations", c.reach.iterations);
        f.get("holdout_frac", c.reach.holdout_frac);
        f.get("beta1", c.reach.adam.beta1);
        f.get("beta2", c.reach.adam.beta2);
        f.get("epsilon", c.reach.adam.epsilon);
        f.finish();
    }
    if (const json* t = root.child("trials")) {
        Fields f(*t, "config.trials");
        f.get("count", c.trials.count);
        f.get("unmarked_count", c.trials.unmarked_count);
        f.get_list("mark_sizes", c.trials.mark_sizes);
        std::string model(to_string(c.trials.model));
        f.get("model", model);
        c.trials.model = parse_model_kind(model);
        f.get("reach_tolerance_deg", c.trials.reach_tolerance_deg);
        f.finish();
    }
    root.get("checkpoint_every", c.checkpoint_every);
    root.get("saliency_dumps", c.saliency_dumps);
    root.get_list("eval_epochs", c.eval_epochs);
    root.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return config_from_json(ss.str());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::uint64_t style_seed(std::uint64_t master, FaceStyleId style, std::string_view purpose) {
    return derive_seed(derive_seed(master, "style-" + std::string(to_string(style))), purpose);
}

// ---------------------------------------------------------------------------
// Layout and artifact writing

namespace {

std::string style_dir(FaceStyleId s) { return std::string(to_string(s)); }

std::string epoch_tag(int epoch) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
    return buf;
}

}  // namespace

fs::path RunLayout::data(FaceStyleId s) const { return root_ / "data" / style_dir(s); }
fs::path RunLayout::image(FaceStyleId s, std::size_t id) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.pgm", id);
    return data(s) / "appearance" / buf;
}
fs::path RunLayout::manifest(FaceStyleId s, bool test) const {
    return data(s) / (test ? "appearance_test.json" : "appearance_train.json");
}
fs::path RunLayout::reach_data(FaceStyleId s) const { return data(s) / "reach.json"; }
fs::path RunLayout::model(FaceStyleId s, ModelKind k) const {
    return root_ / "models" / style_dir(s) / (std::string(to_string(k)) + ".bin");
}
fs::path RunLayout::checkpoint(FaceStyleId s, ModelKind k, int epoch) const {
    return root_ / "models" / style_dir(s) / std::string(to_string(k)) / (epoch_tag(epoch) + ".bin");
}
fs::path RunLayout::reach_model(FaceStyleId s) const { return root_ / "models" / style_dir(s) / "reach.bin"; }
fs::path RunLayout::metrics(FaceStyleId s) const { return root_ / "metrics" / style_dir(s); }
fs::path RunLayout::loss_csv(FaceStyleId s, ModelKind k) const {
    return metrics(s) / (std::string(to_string(k)) + "_loss.csv");
}
fs::path RunLayout::latent_csv(FaceStyleId s) const { return metrics(s) / "autoencoder_latent.csv"; }
fs::path RunLayout::precision_csv(FaceStyleId s, ModelKind k) const {
    return metrics(s) / (std::string(to_string(k)) + "_precision.csv");
}
fs::path RunLayout::reach_metrics(FaceStyleId s) const { return metrics(s) / "reach.json"; }
fs::path RunLayout::reach_loss_csv(FaceStyleId s) const { return metrics(s) / "reach_loss.csv"; }
fs::path RunLayout::trials(FaceStyleId s) const { return metrics(s) / "trials.jsonl"; }
fs::path RunLayout::msr_summary(FaceStyleId s) const { return metrics(s) / "msr_summary.json"; }
fs::path RunLayout::plots(FaceStyleId s) const { return metrics(s) / "plots"; }
fs::path RunLayout::saliency(FaceStyleId s, ModelKind k) const {
    return root_ / "saliency" / style_dir(s) / std::string(to_string(k));
}

namespace {

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

std::string read_text(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError(std::string("missing ") + what + ": " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string_view as_chars(const std::vector<std::uint8_t>& bytes) {
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

json read_json(const fs::path& path, const char* what) {
    const std::string text = read_text(path, what);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": malformed JSON: " + e.what());
    }
}

/// Derived views (report, plots) are versioned instead of conflicting: a
/// differing older file is moved aside to name.N.ext.
void write_versioned(const fs::path& path, std::string_view bytes) {
    ensure_dir(path.parent_path());
    if (fs::exists(path)) {
        if (read_text(path, "file") == bytes) return;
        for (int n = 1;; ++n) {
            fs::path aside = path;
            aside.replace_extension("." + std::to_string(n) + path.extension().string());
            if (!fs::exists(aside)) {
                fs::rename(path, aside);
                std::clog << "note: previous " << path.filename().string() << " kept as " << aside.filename().string()
                          << "\n";
                break;
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

void append_timing(const RunLayout& layout, json entry) {
    ensure_dir(layout.timings().parent_path());
    std::ofstream out(layout.timings(), std::ios::app);
    out << entry.dump() << "\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json pose_json(const HeadPose& p) { return {{"yaw", p.yaw}, {"pitch", p.pitch}}; }

json mark_json(const MarkSpec& m) {
    return {{"row", m.top_left.row}, {"col", m.top_left.col}, {"height", m.height}, {"width", m.width},
            {"intensity", m.intensity}};
}

MarkSpec mark_from_json(const json& j) {
    MarkSpec m;
    m.top_left = {j.at("row").get<int>(), j.at("col").get<int>()};
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.intensity = j.at("intensity").get<double>();
    return m;
}

}  // namespace

bool write_artifact(const fs::path& path, std::string_view bytes) {
    ensure_dir(path.parent_path());
    if (fs::exists(path)) {
        if (read_text(path, "artifact") == bytes) return false;
        throw ArtifactConflictError(path.string() +
                                    " already exists with different content; use a new --out directory");
    }
    const fs::path tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("write failed: " + path.string());
    }
    fs::rename(tmp, path);
    return true;
}

void bind_config(const RunLayout& layout, const ExperimentConfig& cfg) {
    cfg.validate();
    ensure_dir(layout.root());
    if (!fs::exists(layout.config())) {
        write_artifact(layout.config(), config_to_json(cfg));
        return;
    }
    ExperimentConfig existing = load_config(layout.config());
    existing.face_style = cfg.face_style;
    existing.out_dir = cfg.out_dir;
    if (config_to_json(existing) != config_to_json(cfg)) {
        throw ArtifactConflictError(layout.config().string() +
                                    " was written with a different configuration; use a new --out directory");
    }
}

// ---------------------------------------------------------------------------
// Datasets on disk

GenDataResult cmd_gen_data(const ExperimentConfig& cfg, const RunLayout& layout) {
    const auto t0 = std::chrono::steady_clock::now();
    bind_config(layout, cfg);
    const FaceStyleId sid = cfg.face_style;
    ensure_dir(layout.data(sid) / "appearance");

    const FaceStyle style = FaceStyle::preset(sid);
    const AppearanceDataset data =
        build_dataset(cfg.env, style, cfg.appearance_size, style_seed(cfg.seed, sid, "appearance-data"));
    GenDataResult res;
    res.train = data.train.size();
    res.test = data.test.size();

    auto sample_json = [&](const AppearanceSample& s) {
        json j;
        j["id"] = s.id;
        j["file"] = fs::relative(layout.image(sid, s.id), layout.data(sid)).generic_string();
        j["pose"] = pose_json(s.pose);
        j["noise_seed"] = s.noise_seed;
        return j;
    };
    json train_manifest{{"schema_version", 1}, {"style", style_dir(sid)}, {"height", data.height},
                        {"width", data.width},  {"samples", json::array()}};
    json test_manifest = train_manifest;
    for (const auto& s : data.train) {
        res.files_written += write_artifact(layout.image(sid, s.id), as_chars(encode_pgm(s.image)));
        train_manifest["samples"].push_back(sample_json(s));
    }
    for (const auto& t : data.test) {
        res.files_written += write_artifact(layout.image(sid, t.clean.id), as_chars(encode_pgm(t.clean.image)));
        json j = sample_json(t.clean);
        j["mark"] = mark_json(t.truth.mark);
        test_manifest["samples"].push_back(std::move(j));
    }
    res.files_written += write_artifact(layout.manifest(sid, false), train_manifest.dump(1) + "\n");
    res.files_written += write_artifact(layout.manifest(sid, true), test_manifest.dump(1) + "\n");

    const auto reach = build_reach_dataset(cfg.env, style, cfg.reach_size, style_seed(cfg.seed, sid, "reach-data"));
    json reach_manifest{{"schema_version", 1}, {"style", style_dir(sid)},
                        {"joints", JointLimits::nao_left_arm().names}, {"samples", json::array()}};
    for (const auto& s : reach) reach_manifest["samples"].push_back({{"row", s.c.row}, {"col", s.c.col}, {"q", s.q}});
    res.files_written += write_artifact(layout.reach_data(sid), reach_manifest.dump(1) + "\n");
    res.reach = reach.size();

    append_timing(layout, {{"command", "gen-data"}, {"style", style_dir(sid)}, {"seconds", seconds_since(t0)}});
    return res;
}

AppearanceDataset load_appearance_dataset(const RunLayout& layout, FaceStyleId style) {
    AppearanceDataset data;
    data.style = style;
    for (bool test : {false, true}) {
        const json m = read_json(layout.manifest(style, test), "dataset manifest (run gen-data first)");
        try {
            data.height = m.at("height").get<int>();
            data.width = m.at("width").get<int>();
            for (const auto& s : m.at("samples")) {
                AppearanceSample a;
                a.id = s.at("id").get<std::size_t>();
                a.pose = {s.at("pose").at("yaw").get<double>(), s.at("pose").at("pitch").get<double>()};
                a.noise_seed = s.at("noise_seed").get<std::uint64_t>();
                const fs::path file = layout.data(style) / s.at("file").get<std::string>();
                if (!fs::exists(file)) throw MissingArtifactError("missing dataset image: " + file.string());
                a.image = read_pgm(file);
                if (a.image.height() != data.height || a.image.width() != data.width) {
                    throw FormatError(file.string() + ": image dimensions differ from the manifest");
                }
                if (!test) {
                    data.train.push_back(std::move(a));
                } else {
                    auto [marked, truth] = inject_mark(a.image, mark_from_json(s.at("mark")));
                    data.test.push_back({std::move(a), std::move(marked), std::move(truth)});
                }
            }
        } catch (const json::exception& e) {
            throw FormatError(layout.manifest(style, test).string() + ": " + e.what());
        }
    }
    return data;
}

std::vector<ReachSample> load_reach_dataset(const RunLayout& layout, FaceStyleId style) {
    const json m = read_json(layout.reach_data(style), "reach dataset (run gen-data first)");
    std::vector<ReachSample> out;
    try {
        for (const auto& s : m.at("samples")) {
            out.push_back({{s.at("row").get<double>(), s.at("col").get<double>()}, s.at("q").get<JointVector>()});
        }
    } catch (const json::exception& e) {
        throw FormatError(layout.reach_data(style).string() + ": " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

nn::TrainConfig train_config_for(const ExperimentConfig& cfg, ModelKind kind) {
    nn::TrainConfig t = cfg.train;
    t.seed = style_seed(cfg.seed, cfg.face_style, "batches-" + std::string(to_string(kind)));
    return t;
}

bool is_checkpoint_epoch(const ExperimentConfig& cfg, int epoch) {
    return (epoch + 1) % cfg.checkpoint_every == 0 || epoch == cfg.train.epochs - 1;
}

}  // namespace

TrainResult cmd_train(const ExperimentConfig& cfg, const RunLayout& layout, ModelKind kind) {
    const auto t0 = std::chrono::steady_clock::now();
    bind_config(layout, cfg);
    const FaceStyleId sid = cfg.face_style;
    const AppearanceDataset data = load_appearance_dataset(layout, sid);
    if (data.height != cfg.env.height || data.width != cfg.env.width) {
        throw ValidationError("dataset dimensions do not match the configured image size");
    }

    auto observer = [&](int epoch, const GenerativeModel& model) {
        if (is_checkpoint_epoch(cfg, epoch)) write_artifact(layout.checkpoint(sid, kind, epoch), as_chars(encode_model(model)));
    };
    const AppearanceTraining tr =
        train_appearance(kind, data, train_config_for(cfg, kind), cfg.architecture(kind),
                         style_seed(cfg.seed, sid, "init-" + std::string(to_string(kind))), observer);

    TrainResult res;
    res.history = tr.history;
    write_artifact(layout.model(sid, kind), as_chars(encode_model(tr.model)));
    fs::path sidecar = layout.model(sid, kind);
    sidecar.replace_extension(".json");
    write_artifact(sidecar, model_sidecar_json(tr.model));
    write_artifact(layout.loss_csv(sid, kind), loss_csv(tr.history));
    if (kind == ModelKind::Autoencoder) {
        std::vector<AppearanceSample> held_out;
        for (const auto& t : data.test) held_out.push_back(t.clean);
        res.probe = latent_probe(tr.model, held_out);
        write_artifact(layout.latent_csv(sid), latent_csv(*res.probe));
    }
    res.seconds = seconds_since(t0);
    append_timing(layout, {{"command", "train"}, {"style", style_dir(sid)}, {"model", to_string(kind)},
                           {"seconds", res.seconds}});
    return res;
}

// ---------------------------------------------------------------------------
// Novelty evaluation

namespace {

std::vector<int> evaluated_epochs(const ExperimentConfig& cfg) {
    std::vector<int> epochs;
    if (!cfg.eval_epochs.empty()) {
        epochs = cfg.eval_epochs;
        std::sort(epochs.begin(), epochs.end());
        epochs.erase(std::unique(epochs.begin(), epochs.end()), epochs.end());
        return epochs;
    }
    for (int e = 0; e < cfg.train.epochs; ++e) {
        if (is_checkpoint_epoch(cfg, e)) epochs.push_back(e);
    }
    return epochs;
}

std::string precision_csv_text(const PrecisionCurve& c) {
    std::string out = "epoch,weighted,unweighted,count\n";
    for (std::size_t i = 0; i < c.epochs.size(); ++i) {
        out += std::to_string(c.epochs[i]) + ",";
        if (!c.weighted.empty()) out += fmt17(c.weighted[i]);
        out += ",";
        if (!c.unweighted.empty()) out += fmt17(c.unweighted[i]);
        out += "," + std::to_string(c.count) + "\n";
    }
    return out;
}

void dump_saliency(const RunLayout& layout, FaceStyleId sid, ModelKind kind, const GenerativeModel& model,
                   const ErrorStats& stats, const MarkedSample& t, const DetectorConfig& det, const char* variant) {
    const Detection d = detect(model, stats, t.marked, t.clean.pose, det);
    const fs::path dir = layout.saliency(sid, kind);
    char id[16];
    std::snprintf(id, sizeof id, "%06zu", t.clean.id);
    const std::string stem = std::string(id) + "_" + variant;
    write_artifact(dir / (std::string(id) + "_observed.pgm"), as_chars(encode_pgm(t.marked)));
    write_artifact(dir / (stem + "_predicted.pgm"), as_chars(encode_pgm(d.predicted)));
    write_artifact(dir / (stem + "_saliency.pgm"), as_chars(encode_pgm(normalize_minmax(d.saliency))));
    write_artifact(dir / (stem + "_binary.pgm"), as_chars(encode_pgm(mask_to_image(binarize(d.saliency, det)))));
}

}  // namespace

PrecisionCurve cmd_eval_novelty(const ExperimentConfig& cfg, const RunLayout& layout, ModelKind kind, bool weighted,
                                bool unweighted) {
    if (!weighted && !unweighted) throw ValidationError("eval-novelty: no variant selected");
    const auto t0 = std::chrono::steady_clock::now();
    bind_config(layout, cfg);
    const FaceStyleId sid = cfg.face_style;
    const std::vector<int> epochs = evaluated_epochs(cfg);
    std::vector<int> absent;
    for (int e : epochs) {
        if (!fs::exists(layout.checkpoint(sid, kind, e))) absent.push_back(e);
    }
    if (!absent.empty()) {
        std::string list;
        for (int e : absent) list += (list.empty() ? "" : ", ") + std::to_string(e);
        throw MissingArtifactError("missing " + std::string(to_string(kind)) + " checkpoints for epochs " + list +
                                   " under " + layout.checkpoint(sid, kind, 0).parent_path().string() +
                                   " (run train first)");
    }
    const AppearanceDataset data = load_appearance_dataset(layout, sid);

    DetectorConfig det_w = cfg.detector;
    det_w.use_variance = true;
    DetectorConfig det_u = cfg.detector;
    det_u.use_variance = false;

    PrecisionCurve curve;
    curve.count = data.test.size();
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const GenerativeModel model = load_model(layout.checkpoint(sid, kind, epochs[i]));
        const ErrorStats stats = calibrate_stats(model, data.train, cfg.detector.epsilon_var);
        curve.epochs.push_back(epochs[i]);
        if (weighted) curve.weighted.push_back(evaluate_novelty(model, stats, data.test, det_w).mean_precision);
        if (unweighted) curve.unweighted.push_back(evaluate_novelty(model, stats, data.test, det_u).mean_precision);
        if (i + 1 == epochs.size()) {
            const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg.saliency_dumps), data.test.size());
            for (std::size_t k = 0; k < n; ++k) {
                if (weighted) dump_saliency(layout, sid, kind, model, stats, data.test[k], det_w, "weighted");
                if (unweighted) dump_saliency(layout, sid, kind, model, stats, data.test[k], det_u, "unweighted");
            }
        }
    }

    // One file per variant so an ablation-only run and a full run coexist.
    auto variant_path = [&](const char* v) {
        fs::path p = layout.precision_csv(sid, kind);
        return p.replace_filename(p.stem().string() + "_" + v + ".csv");
    };
    if (weighted) {
        PrecisionCurve only = curve;
        only.unweighted.clear();
        write_artifact(variant_path("weighted"), precision_csv_text(only));
    }
    if (unweighted) {
        PrecisionCurve only = curve;
        only.weighted.clear();
        write_artifact(variant_path("unweighted"), precision_csv_text(only));
    }
    append_timing(layout, {{"command", "eval-novelty"}, {"style", style_dir(sid)}, {"model", to_string(kind)},
                           {"seconds", seconds_since(t0)}});
    return curve;
}

// ---------------------------------------------------------------------------
// Reaching

namespace {

ReachNetConfig reach_config_for(const ExperimentConfig& cfg, FaceStyleId sid) {
    ReachNetConfig r = cfg.reach;
    r.seed = style_seed(cfg.seed, sid, "reach-net");
    return r;
}

json per_joint_json(const std::vector<double>& v) {
    json j = json::object();
    const auto names = JointLimits::nao_left_arm().names;
    for (std::size_t k = 0; k < v.size() && k < names.size(); ++k) j[names[k]] = v[k];
    return j;
}

}  // namespace

ReachResult cmd_train_reach(const ExperimentConfig& cfg, const RunLayout& layout) {
    const auto t0 = std::chrono::steady_clock::now();
    bind_config(layout, cfg);
    const FaceStyleId sid = cfg.face_style;
    const auto samples = load_reach_dataset(layout, sid);
    const FaceStyle style = FaceStyle::preset(sid);

    ReachResult res;
    res.training = train_reach(cfg.env, style, samples, reach_config_for(cfg, sid));
    res.grid_rms_per_joint = grid_rms_per_joint(cfg.env, res.training.model, 2);
    double s = 0.0;
    for (double v : res.grid_rms_per_joint) s += v * v;
    res.grid_rms = std::sqrt(s / static_cast<double>(res.grid_rms_per_joint.size()));

    const auto& net = res.training.model.net;
    write_artifact(layout.reach_model(sid), as_chars(nn::encode_network(net)));
    fs::path sidecar = layout.reach_model(sid);
    sidecar.replace_extension(".json");
    write_artifact(sidecar, nn::layer_specs_json(net));

    std::string csv = "iteration,train_mse\n";
    for (std::size_t i = 0; i < res.training.train_loss.size(); ++i) {
        csv += std::to_string(i) + "," + fmt17(res.training.train_loss[i]) + "\n";
    }
    write_artifact(layout.reach_loss_csv(sid), csv);

    json m;
    m["train_count"] = res.training.train_count;
    m["holdout_count"] = res.training.holdout_count;
    m["final_train_mse"] = res.training.final_mse;
    m["holdout_rms_deg"] = res.training.holdout_rms;
    m["holdout_rms_per_joint_deg"] = per_joint_json(res.training.holdout_rms_per_joint);
    m["grid_step_px"] = 2;
    m["grid_rms_deg"] = res.grid_rms;
    m["grid_rms_per_joint_deg"] = per_joint_json(res.grid_rms_per_joint);
    write_artifact(layout.reach_metrics(sid), m.dump(2) + "\n");

    append_timing(layout, {{"command", "train-reach"}, {"style", style_dir(sid)}, {"seconds", seconds_since(t0)}});
    return res;
}

// ---------------------------------------------------------------------------
// End-to-end trials

namespace {

TrialSpec marked_trial(const ExperimentConfig& cfg, FaceStyleId sid, const FaceStyle& style, std::size_t i) {
    const std::uint64_t ts = derive_seed(style_seed(cfg.seed, sid, "trials"), static_cast<std::uint64_t>(i));
    TrialSpec spec;
    spec.pose = sample_pose(derive_seed(ts, "pose"));
    spec.noise_seed = derive_seed(ts, "noise");
    Rng pick(derive_seed(ts, "size"));
    const int size = cfg.trials.mark_sizes[pick.below(cfg.trials.mark_sizes.size())];
    spec.mark = sample_face_mark(derive_seed(ts, "mark"), cfg.env, style, spec.pose, size, size);
    return spec;
}

TrialSpec unmarked_trial(const ExperimentConfig& cfg, FaceStyleId sid, std::size_t i) {
    const std::uint64_t ts = derive_seed(style_seed(cfg.seed, sid, "unmarked-trials"), static_cast<std::uint64_t>(i));
    TrialSpec spec;
    spec.pose = sample_pose(derive_seed(ts, "pose"));
    spec.noise_seed = derive_seed(ts, "noise");
    return spec;
}

json trial_json(const TrialRecord& r) {
    json j;
    j["index"] = r.index;
    j["marked"] = r.spec.mark.has_value();
    j["pose"] = pose_json(r.spec.pose);
    j["noise_seed"] = r.spec.noise_seed;
    j["mark"] = r.spec.mark ? mark_json(*r.spec.mark) : json(nullptr);
    j["any_region"] = r.any_region;
    j["detected"] = r.detected;
    j["reached"] = r.reached;
    j["precision"] = r.precision;
    j["centroid"] = r.centroid ? json{{"row", r.centroid->row}, {"col", r.centroid->col}} : json(nullptr);
    j["centroid_error_px"] = r.centroid_error_px ? json(*r.centroid_error_px) : json(nullptr);
    j["q"] = r.q ? json(*r.q) : json(nullptr);
    j["joint_error_deg"] = r.joint_error_deg ? json(*r.joint_error_deg) : json(nullptr);
    j["extrapolated"] = r.extrapolated;
    return j;
}

json summary_json(const MsrSummary& s) {
    json j;
    j["style"] = style_dir(s.style);
    j["model"] = to_string(s.model);
    j["trials"] = s.trials;
    j["detected"] = s.detected;
    j["detection_rate"] = s.detection_rate;
    j["mean_precision"] = s.mean_precision;
    j["reached"] = s.reached;
    j["joint_error_count"] = s.joint_error_count;
    j["mean_joint_error_deg"] = s.mean_joint_error_deg;
    j["unmarked_trials"] = s.unmarked_trials;
    j["false_positives"] = s.false_positives;
    j["false_positive_rate"] = s.false_positive_rate;
    return j;
}

}  // namespace

MsrResult cmd_run_msr(const ExperimentConfig& cfg, const RunLayout& layout, std::optional<ModelKind> kind_override) {
    bind_config(layout, cfg);
    const ModelKind kind = kind_override.value_or(cfg.trials.model);
    MsrResult result;
    for (FaceStyleId sid : {FaceStyleId::A, FaceStyleId::B}) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::string> missing;
        for (const fs::path& p :
             {layout.model(sid, kind), layout.reach_model(sid), layout.manifest(sid, false)}) {
            if (!fs::exists(p)) missing.push_back(p.string());
        }
        if (!missing.empty()) {
            std::string list;
            for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
            result.warnings.push_back("style " + style_dir(sid) + " skipped: missing " + list);
            continue;
        }

        const FaceStyle style = FaceStyle::preset(sid);
        const GenerativeModel model = load_model(layout.model(sid, kind));
        const AppearanceDataset data = load_appearance_dataset(layout, sid);
        const ErrorStats stats = calibrate_stats(model, data.train, cfg.detector.epsilon_var);
        ReachModel reach_model = make_reach_model(cfg.env, style, reach_config_for(cfg, sid));
        reach_model.net = nn::load_network(layout.reach_model(sid));

        TrialContext ctx;
        ctx.env = cfg.env;
        ctx.style = style;
        ctx.appearance = &model;
        ctx.stats = &stats;
        ctx.detector = cfg.detector;
        ctx.reach = &reach_model;
        ctx.reach_tolerance_deg = cfg.trials.reach_tolerance_deg;

        MsrSummary s;
        s.style = sid;
        s.model = kind;
        std::string lines;
        double precision_sum = 0.0;
        double joint_sum = 0.0;
        for (int i = 0; i < cfg.trials.count; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const TrialRecord r = simulate_reach_trial(ctx, marked_trial(cfg, sid, style, idx), idx);
            ++s.trials;
            s.detected += r.detected;
            s.reached += r.reached;
            precision_sum += r.precision;
            if (r.joint_error_deg) {
                ++s.joint_error_count;
                joint_sum += *r.joint_error_deg;
            }
            lines += trial_json(r).dump() + "\n";
        }
        for (int i = 0; i < cfg.trials.unmarked_count; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const TrialRecord r = simulate_reach_trial(ctx, unmarked_trial(cfg, sid, idx), idx);
            ++s.unmarked_trials;
            s.false_positives += r.any_region;
            lines += trial_json(r).dump() + "\n";
        }
        auto rate = [](std::size_t k, std::size_t n) { return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n); };
        s.detection_rate = rate(s.detected, s.trials);
        s.mean_precision = s.trials == 0 ? 0.0 : precision_sum / static_cast<double>(s.trials);
        s.mean_joint_error_deg = s.joint_error_count == 0 ? 0.0 : joint_sum / static_cast<double>(s.joint_error_count);
        s.false_positive_rate = rate(s.false_positives, s.unmarked_trials);
        s.seconds = seconds_since(t0);

        write_artifact(layout.trials(sid), lines);
        write_artifact(layout.msr_summary(sid), summary_json(s).dump(2) + "\n");
        append_timing(layout, {{"command", "run-msr"}, {"style", style_dir(sid)}, {"model", to_string(kind)},
                               {"seconds", s.seconds}});
        result.styles.push_back(s);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Report

std::vector<std::vector<double>> read_csv_columns(const fs::path& path, const std::vector<std::string>& names) {
    std::istringstream in(read_text(path, "metrics file"));
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    const auto header = split(line);
    std::vector<std::size_t> index;
    for (const auto& n : names) {
        const auto it = std::find(header.begin(), header.end(), n);
        if (it == header.end()) throw FormatError(path.string() + ": no column \"" + n + "\"");
        index.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<std::vector<double>> cols(names.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        for (std::size_t k = 0; k < index.size(); ++k) {
            const std::string cell = index[k] < cells.size() ? cells[index[k]] : std::string();
            cols[k].push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell));
        }
    }
    return cols;
}

namespace {

json absent() { return {{"status", "absent"}}; }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json series_json(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(finite_or_null(x));
    return a;
}

void plot_to(const RunLayout& layout, FaceStyleId sid, const std::string& name, const std::vector<PlotSeries>& s) {
    write_versioned(layout.plots(sid) / (name + ".pgm"), as_chars(encode_pgm(line_plot(s))));
}

json training_section(const RunLayout& layout, FaceStyleId sid, ModelKind kind) {
    const fs::path p = layout.loss_csv(sid, kind);
    if (!fs::exists(p)) return absent();
    const auto cols = read_csv_columns(p, {"train_mse", "test_mse"});
    json j{{"status", "present"}, {"epochs", cols[0].size()}};
    j["final_train_mse"] = cols[0].empty() ? json(nullptr) : finite_or_null(cols[0].back());
    j["final_test_mse"] = cols[1].empty() ? json(nullptr) : finite_or_null(cols[1].back());
    j["train_mse"] = series_json(cols[0]);
    j["test_mse"] = series_json(cols[1]);
    plot_to(layout, sid, std::string(to_string(kind)) + "_loss",
            {{cols[0], 0.95, false}, {cols[1], 0.6, true}});
    return j;
}

json latent_section(const RunLayout& layout, FaceStyleId sid) {
    const fs::path p = layout.latent_csv(sid);
    if (!fs::exists(p)) return absent();
    std::istringstream in(read_text(p, "latent CSV"));
    std::string header;
    std::getline(in, header);
    const auto dim = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) - 1;
    std::vector<std::string> names{"yaw", "pitch"};
    for (std::size_t k = 0; k < dim; ++k) names.push_back("z" + std::to_string(k));
    const auto cols = read_csv_columns(p, names);
    const auto n = static_cast<Eigen::Index>(cols[0].size());
    Eigen::MatrixXd z(n, static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) z(i, static_cast<Eigen::Index>(k)) = cols[k + 2][static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd yaw = Eigen::Map<const Eigen::VectorXd>(cols[0].data(), n);
    const Eigen::VectorXd pitch = Eigen::Map<const Eigen::VectorXd>(cols[1].data(), n);
    return {{"status", "present"}, {"count", cols[0].size()}, {"latent_dim", dim},
            {"r2_yaw", linear_r2(z, yaw)}, {"r2_pitch", linear_r2(z, pitch)}};
}

json variant_section(const RunLayout& layout, FaceStyleId sid, ModelKind kind, const char* variant,
                     std::vector<double>* out) {
    fs::path p = layout.precision_csv(sid, kind);
    p.replace_filename(p.stem().string() + "_" + variant + ".csv");
    if (!fs::exists(p)) return absent();
    const auto cols = read_csv_columns(p, {"epoch", variant, "count"});
    *out = cols[1];
    json epochs = json::array();
    for (double e : cols[0]) epochs.push_back(static_cast<int>(e));
    return {{"status", "present"},
            {"count", cols[2].empty() ? 0 : static_cast<std::size_t>(cols[2].front())},
            {"epochs", epochs},
            {"mean_precision", series_json(cols[1])},
            {"final", cols[1].empty() ? json(nullptr) : finite_or_null(cols[1].back())}};
}

json style_section(const RunLayout& layout, FaceStyleId sid) {
    json s;
    json training = json::object();
    json novelty = json::object();
    json ablation = json::object();
    std::map<ModelKind, double> final_weighted;
    for (ModelKind kind : {ModelKind::Autoencoder, ModelKind::Decoder}) {
        const std::string k(to_string(kind));
        training[k] = training_section(layout, sid, kind);
        std::vector<double> w, u;
        json nv{{"weighted", variant_section(layout, sid, kind, "weighted", &w)},
                {"unweighted", variant_section(layout, sid, kind, "unweighted", &u)}};
        if (!w.empty() || !u.empty()) plot_to(layout, sid, k + "_precision", {{w, 0.95, false}, {u, 0.6, true}});
        if (!w.empty()) final_weighted[kind] = w.back();
        if (!w.empty() && !u.empty()) {
            ablation[k] = {{"status", "present"},
                           {"count", nv["weighted"]["count"]},
                           {"weighted_final", finite_or_null(w.back())},
                           {"unweighted_final", finite_or_null(u.back())},
                           {"weighted_minus_unweighted", finite_or_null(w.back() - u.back())}};
        } else {
            ablation[k] = absent();
        }
        novelty[k] = std::move(nv);
    }
    s["training"] = std::move(training);
    s["latent"] = latent_section(layout, sid);
    s["novelty"] = std::move(novelty);
    s["ablation"] = std::move(ablation);
    if (final_weighted.size() == 2) {
        const double a = final_weighted[ModelKind::Autoencoder];
        const double d = final_weighted[ModelKind::Decoder];
        s["parity"] = {{"status", "present"}, {"autoencoder_final", finite_or_null(a)},
                       {"decoder_final", finite_or_null(d)}, {"abs_difference", finite_or_null(std::abs(a - d))}};
    } else {
        s["parity"] = absent();
    }

    if (fs::exists(layout.reach_metrics(sid))) {
        json r = read_json(layout.reach_metrics(sid), "reach metrics");
        r["status"] = "present";
        s["reach"] = std::move(r);
        if (fs::exists(layout.reach_loss_csv(sid))) {
            auto loss = read_csv_columns(layout.reach_loss_csv(sid), {"train_mse"})[0];
            for (double& v : loss) v = std::log10(std::max(v, 1e-300));
            plot_to(layout, sid, "reach_loss_log10", {{loss, 0.95, false}});
        }
    } else {
        s["reach"] = absent();
    }
    if (fs::exists(layout.msr_summary(sid))) {
        json m = read_json(layout.msr_summary(sid), "trial summary");
        m["status"] = "present";
        s["msr"] = std::move(m);
    } else {
        s["msr"] = absent();
    }
    return s;
}

}  // namespace

std::string build_report(const RunLayout& layout) {
    json r;
    r["format"] = "msr-report";
    r["schema_version"] = kReportSchemaVersion;
    r["code_version"] = std::string(library_version());
    r["config"] = fs::exists(layout.config()) ? read_json(layout.config(), "config") : absent();
    json styles = json::object();
    for (FaceStyleId sid : {FaceStyleId::A, FaceStyleId::B}) styles[style_dir(sid)] = style_section(layout, sid);
    r["styles"] = std::move(styles);

    // Latest wall-clock entry per (command, style, model).
    json timings = json::array();
    if (fs::exists(layout.timings())) {
        std::map<std::string, json> latest;
        std::istringstream in(read_text(layout.timings(), "timings"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json e = json::parse(line, nullptr, false);
            if (e.is_discarded()) continue;
            const std::string key = e.value("command", "") + "/" + e.value("style", "") + "/" + e.value("model", "");
            latest[key] = std::move(e);
        }
        for (auto& [k, v] : latest) timings.push_back(std::move(v));
    }
    r["timings"] = {{"status", timings.empty() ? "absent" : "present"}, {"entries", std::move(timings)}};
    return r.dump(2) + "\n";
}

std::string cmd_report(const RunLayout& layout) {
    if (!fs::is_directory(layout.root())) throw MissingArtifactError("run directory not found: " + layout.root().string());
    const std::string text = build_report(layout);
    write_versioned(layout.report(), text);
    return text;
}

}  // namespace msr
