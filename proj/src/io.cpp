#include "nnd/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nnd/encoder.hpp"
#include "nnd/errors.hpp"
#include "nnd/parallel.hpp"

namespace nnd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCsvHeader = "t,x,y,vx,vy,theta,omega,s,l,a";

std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw DataError(where + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

// Reads a JSON object field by field and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : m_j(j), m_path(std::move(path)) {
        if (!j.is_object()) throw ConfigError(label() + " must be a JSON object");
    }

    bool has(const std::string& key) {
        m_seen.insert(key);
        return m_j.contains(key);
    }

    template <class T>
    std::optional<T> opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return convert<T>(m_j.at(key), field(key));
    }

    template <class T>
    T req(const std::string& key) {
        if (!has(key)) throw ConfigError("missing field '" + field(key) + "'");
        return convert<T>(m_j.at(key), field(key));
    }

    template <class T>
    void read(const std::string& key, T& dst) {
        if (auto v = opt<T>(key)) dst = *v;
    }

    const json& child(const std::string& key) { return m_j.at(key); }
    const std::string& path() const { return m_path; }
    std::string field(const std::string& key) const { return m_path.empty() ? key : m_path + "." + key; }

    void finish() const {
        for (auto it = m_j.begin(); it != m_j.end(); ++it) {
            if (!m_seen.count(it.key())) throw ConfigError("unknown field '" + field(it.key()) + "'");
        }
    }

private:
    std::string label() const { return m_path.empty() ? "config" : "'" + m_path + "'"; }

    template <class T>
    static T convert(const json& v, const std::string& name) {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
                return v.get<double>();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
                return v.get<bool>();
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
                return v.get<std::string>();
            } else if constexpr (std::is_same_v<T, Range>) {
                if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) throw ConfigError("");
                Range r{v[0].get<double>(), v[1].get<double>()};
                if (!(r.lo <= r.hi)) throw ConfigError("field '" + name + "' must satisfy lo <= hi");
                return r;
            } else if constexpr (std::is_same_v<T, Vec2>) {
                if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) throw ConfigError("");
                return Vec2{v[0].get<double>(), v[1].get<double>()};
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError("");
                if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0) throw ConfigError("");
                return v.get<T>();
            } else {
                static_assert(sizeof(T) == 0, "unsupported config type");
            }
        } catch (const ConfigError& e) {
            if (std::string(e.what()).empty()) throw ConfigError("field '" + name + "' has the wrong type");
            throw;
        } catch (const json::exception&) {
            throw ConfigError("field '" + name + "' has the wrong type");
        }
    }

    const json& m_j;
    std::string m_path;
    std::set<std::string> m_seen;
};

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

json world_to_json(const WorldConfig& w) {
    json j;
    j["width_px"] = w.width_px;
    j["height_px"] = w.height_px;
    j["fps"] = w.fps;
    j["meters_per_pixel"] = w.meters_per_pixel;
    j["gravity"] = w.gravity;
    j["n_frames"] = w.n_frames;
    j["motion_params"] = w.motion_params;
    return j;
}

void read_world(ObjectReader& r, WorldConfig& w) {
    r.read("width_px", w.width_px);
    r.read("height_px", w.height_px);
    r.read("fps", w.fps);
    r.read("meters_per_pixel", w.meters_per_pixel);
    r.read("gravity", w.gravity);
    r.read("n_frames", w.n_frames);
    if (r.has("motion_params")) {
        ObjectReader mp(r.child("motion_params"), r.field("motion_params"));
        for (auto it = r.child("motion_params").begin(); it != r.child("motion_params").end(); ++it) {
            w.motion_params[it.key()] = mp.req<double>(it.key());
        }
        mp.finish();
    }
    try {
        w.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(r.path().empty() ? std::string(e.what()) : r.path() + ": " + e.what());
    }
}

WorldConfig world_from(const json& j, const std::string& path, WorldConfig base) {
    ObjectReader r(j, path);
    read_world(r, base);
    r.finish();
    return base;
}

ShapeProto shape_from(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    ShapeProto s;
    try {
        s.kind = shape_kind_from_string(r.req<std::string>("kind"));
    } catch (const Error& e) {
        throw ConfigError(r.field("kind") + ": " + e.what());
    }
    s.length = r.req<double>("length");
    s.width = s.kind == ShapeKind::Circle ? r.opt<double>("width").value_or(s.length) : r.req<double>("width");
    r.finish();
    try {
        s.validate();
    } catch (const Error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return s;
}

MotionType motion_from(ObjectReader& r) {
    const std::string name = r.req<std::string>("motion_type");
    try {
        return motion_type_from_string(name);
    } catch (const Error&) {
        throw ConfigError("field 'motion_type' has unknown value '" + name + "'");
    }
}

} // namespace

// ---- states.csv -----------------------------------------------------------

std::string states_csv(std::span<const double> times, std::span<const PhysState> states) {
    if (times.size() != states.size()) throw DataError("states_csv: times and states differ in length");
    std::string out = kCsvHeader;
    out += '\n';
    for (std::size_t i = 0; i < states.size(); ++i) {
        out += fmt9(times[i]);
        for (std::size_t d = 0; d < kStateDim; ++d) {
            out += ',';
            out += fmt9(states[i][d]);
        }
        out += '\n';
    }
    return out;
}

void write_states_csv(const fs::path& path, std::span<const double> times, std::span<const PhysState> states) {
    write_text_file(path, states_csv(times, states));
}

StatesTable read_states_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty states file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw DataError(path.string() + ": unexpected header '" + line + "'");
    StatesTable table;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const std::string where = path.string() + ":" + std::to_string(row);
        std::vector<double> vals;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            vals.push_back(parse_double(std::string_view(line).substr(start, comma - start), where));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (vals.size() != kStateDim + 1) throw DataError(where + ": expected 10 columns");
        table.times.push_back(vals[0]);
        PhysState s;
        std::copy(vals.begin() + 1, vals.end(), s.v.begin());
        require_finite(s, where);
        table.states.push_back(s);
    }
    if (table.states.empty()) throw DataError(path.string() + ": no rows");
    return table;
}

// ---- masks ----------------------------------------------------------------

void write_pgm(const Mask& mask, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
    std::vector<char> bytes(mask.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? static_cast<char>(255) : 0;
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

Mask read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    auto token = [&]() {
        std::string t;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
            } else {
                t += c;
            }
        }
        return t;
    };
    if (token() != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(token());
        h = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed PGM header");
    }
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw DataError(path.string() + ": unsupported PGM header");
    Mask m(w, h);
    std::vector<char> bytes(m.data.size());
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw DataError(path.string() + ": truncated PGM");
    for (std::size_t i = 0; i < bytes.size(); ++i) m.data[i] = bytes[i] != 0 ? 1 : 0;
    return m;
}

std::vector<Mask> read_mask_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("mask_", 0) == 0 && e.path().extension() == ".pgm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError(dir.string() + ": no mask_*.pgm files");
    std::vector<Mask> masks(files.size());
    parallel_for(files.size(), [&](std::size_t i) { masks[i] = read_pgm(files[i]); });
    return masks;
}

// ---- datasets -------------------------------------------------------------

std::string manifest_json(const DatasetManifest& m) {
    json j;
    j["format"] = "nnd-dataset";
    j["version"] = m.version;
    j["motion_type"] = std::string(to_string(m.motion_type));
    j["world"] = world_to_json(m.world);
    j["shape_kind"] = std::string(to_string(m.shape_kind));
    j["normalization"] = {
        {"offset", m.normalization.offset}, {"scale", m.normalization.scale}, {"time_scale", m.normalization.time_scale}};
    j["seed"] = m.seed;
    j["n"] = m.n;
    j["masks"] = m.masks;
    return j.dump(1) + "\n";
}

void write_dataset(const fs::path& dir, const DatasetManifest& manifest, std::span<const Trajectory> trajs) {
    if (trajs.size() != manifest.n) throw DataError("write_dataset: manifest count does not match trajectories");
    fs::create_directories(dir);
    parallel_for(trajs.size(), [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "traj_%04zu", i);
        const fs::path td = dir / name;
        fs::create_directories(td);
        write_states_csv(td / "states.csv", trajs[i].timestamps, trajs[i].states);
        if (manifest.masks) {
            for (std::size_t k = 0; k < trajs[i].masks.size(); ++k) {
                char mname[32];
                std::snprintf(mname, sizeof mname, "mask_%04zu.pgm", k);
                write_pgm(trajs[i].masks[k], td / mname);
            }
        }
    });
    write_text_file(dir / "manifest.json", manifest_json(manifest));
}

Dataset read_dataset(const fs::path& dir, StateSource source) {
    const fs::path mpath = dir / "manifest.json";
    if (!fs::exists(mpath)) throw DataError(dir.string() + ": missing manifest.json");
    Dataset ds;
    DatasetManifest& m = ds.manifest;
    try {
        const json j = json::parse(read_text_file(mpath));
        if (j.at("format").get<std::string>() != "nnd-dataset") throw DataError(mpath.string() + ": unknown format");
        m.version = j.at("version").get<int>();
        if (m.version != kDatasetVersion) {
            throw DataError(mpath.string() + ": unsupported version " + std::to_string(m.version));
        }
        m.motion_type = motion_type_from_string(j.at("motion_type").get<std::string>());
        m.world = world_from(j.at("world"), "world", WorldConfig{});
        m.shape_kind = shape_kind_from_string(j.at("shape_kind").get<std::string>());
        const json& n = j.at("normalization");
        m.normalization.offset = n.at("offset").get<std::array<double, kStateDim>>();
        m.normalization.scale = n.at("scale").get<std::array<double, kStateDim>>();
        m.normalization.time_scale = n.at("time_scale").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.n = j.at("n").get<std::size_t>();
        m.masks = j.at("masks").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(mpath.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(mpath.string() + ": " + e.what());
    }
    if (source == StateSource::Encoder && !m.masks) {
        throw DataError(dir.string() + ": encoder states requested but the dataset has no masks");
    }

    ds.trajectories.resize(m.n);
    parallel_for(m.n, [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof name, "traj_%04zu", i);
        const fs::path td = dir / name;
        StatesTable table = read_states_csv(td / "states.csv");
        Trajectory& t = ds.trajectories[i];
        t.motion_type = m.motion_type;
        t.timestamps = std::move(table.times);
        if (source == StateSource::Encoder) {
            const auto masks = read_mask_dir(td);
            t.states = encode_sequence(masks, t.timestamps, m.world);
        } else {
            t.states = std::move(table.states);
        }
        t.validate();
    });
    return ds;
}

// ---- configs --------------------------------------------------------------

SimulateConfig parse_simulate_config(const std::string& text) {
    const json j = parse_json(text, "simulate config");
    ObjectReader r(j, "");
    SimulateConfig c;
    c.motion_type = motion_from(r);
    c.ranges = default_ranges(c.motion_type);
    c.n = r.req<std::size_t>("n");
    if (c.n < 1) throw ConfigError("field 'n' must be >= 1");
    c.seed = r.req<std::uint64_t>("seed");
    r.read("write_masks", c.write_masks);
    if (r.has("world")) c.ranges.world = world_from(r.child("world"), "world", c.ranges.world);
    if (r.has("ranges")) {
        ObjectReader rr(r.child("ranges"), "ranges");
        SamplingRanges& g = c.ranges;
        if (auto s = rr.opt<std::string>("shape")) {
            try {
                g.shape_kind = shape_kind_from_string(*s);
            } catch (const Error&) {
                throw ConfigError("field 'ranges.shape' has unknown value '" + *s + "'");
            }
        }
        rr.read("length", g.length);
        rr.read("aspect", g.aspect);
        rr.read("x", g.x);
        rr.read("y", g.y);
        rr.read("vx", g.vx);
        rr.read("vy", g.vy);
        rr.read("theta", g.theta);
        rr.read("omega", g.omega);
        rr.read("radius", g.radius);
        rr.read("phase", g.phase);
        rr.finish();
        if (!(g.length.lo > 0.0)) throw ConfigError("field 'ranges.length' must be positive");
        if (!(g.aspect.lo > 0.0 && g.aspect.hi <= 1.0)) throw ConfigError("field 'ranges.aspect' must lie in (0, 1]");
    }
    r.finish();
    // Damped pendula draw their rod length from ranges.radius; a rod length
    // pinned in the world config without an explicit range fixes it.
    const bool rod_pinned = j.contains("world") && j["world"].contains("motion_params") &&
                            j["world"]["motion_params"].contains("rod_length");
    const bool radius_given = j.contains("ranges") && j["ranges"].contains("radius");
    if (c.motion_type == MotionType::DampedOscillation && rod_pinned && !radius_given) {
        const double rod = c.ranges.world.param("rod_length", 0.0);
        c.ranges.radius = {rod, rod};
    }
    return c;
}

WorldConfig parse_world_json(const std::string& text) {
    return world_from(parse_json(text, "world config"), "", WorldConfig{});
}

ShapeProto parse_shape_json(const std::string& text) {
    return shape_from(parse_json(text, "shape config"), "");
}

TrainSettings parse_train_config(const std::string& text) {
    const json j = parse_json(text, "train config");
    ObjectReader r(j, "");
    TrainSettings s;
    const std::string preset = r.opt<std::string>("preset").value_or("desk");
    if (preset == "desk") {
        s.train = TrainConfig::desk();
        s.integrator = desk_integrator();
    } else if (preset == "full") {
        s.train = TrainConfig{};
        s.integrator = IntegratorConfig{};
    } else {
        throw ConfigError("field 'preset' must be \"desk\" or \"full\"");
    }
    TrainConfig& t = s.train;
    r.read("lr0", t.lr0);
    r.read("lr_min", t.lr_min);
    r.read("epochs", t.epochs);
    r.read("batch_size", t.batch_size);
    r.read("weight_decay", t.weight_decay);
    r.read("seed", t.seed);
    r.read("grad_clip_norm", t.grad_clip_norm);
    r.read("hidden", t.hidden);
    r.read("linear_only", t.linear_only);
    r.read("warm_start", t.warm_start);
    r.read("test_fraction", t.test_fraction);
    r.read("substeps_per_frame", s.integrator.substeps_per_frame);
    if (auto src = r.opt<std::string>("state_source")) {
        if (*src == "encoder") {
            s.source = StateSource::Encoder;
        } else if (*src == "analytic") {
            s.source = StateSource::Analytic;
        } else {
            throw ConfigError("field 'state_source' must be \"encoder\" or \"analytic\"");
        }
    }
    r.finish();
    t.validate();
    s.integrator.validate();
    return s;
}

namespace {

json train_settings_object(const TrainSettings& s) {
    const TrainConfig& t = s.train;
    json j;
    j["lr0"] = t.lr0;
    j["lr_min"] = t.lr_min;
    j["epochs"] = t.epochs;
    j["batch_size"] = t.batch_size;
    j["weight_decay"] = t.weight_decay;
    j["seed"] = t.seed;
    j["grad_clip_norm"] = t.grad_clip_norm;
    j["hidden"] = t.hidden;
    j["linear_only"] = t.linear_only;
    j["warm_start"] = t.warm_start;
    j["test_fraction"] = t.test_fraction;
    j["substeps_per_frame"] = s.integrator.substeps_per_frame;
    j["state_source"] = s.source == StateSource::Encoder ? "encoder" : "analytic";
    return j;
}

} // namespace

std::string train_config_json(const TrainSettings& s) { return train_settings_object(s).dump(1) + "\n"; }

std::string train_report_json(const TrainReport& r, const TrainSettings& s) {
    json j;
    j["format"] = "nnd-train-report";
    j["version"] = 1;
    j["motion_type"] = std::string(to_string(r.model.motion_type));
    j["config"] = train_settings_object(s);
    j["test_nae"] = r.test_nae;
    j["best_loss"] = r.best_loss;
    j["best_epoch"] = r.best_epoch;
    j["eps_residual"] = r.model.params.coef(kEpsResidual);
    j["params_hash"] = params_hash(r.model.params);
    j["train_indices"] = r.split.train;
    j["test_indices"] = r.split.test;
    j["loss_curve"] = r.loss_curve;
    return j.dump(1) + "\n";
}

PhysState parse_state_json(const std::string& text, const std::optional<ShapeProto>& shape) {
    const json j = parse_json(text, "state");
    ObjectReader r(j, "");
    PhysState z;
    if (shape) set_geometry(z, *shape);
    for (std::size_t d = 0; d < kStateDim; ++d) {
        const std::string key(component_name(d));
        const bool derivable = shape && (d == kS || d == kL || d == kA);
        if (auto v = r.opt<double>(key)) {
            z[d] = *v;
        } else if (!derivable) {
            throw ConfigError("missing field '" + key + "'");
        }
    }
    r.finish();
    require_finite(z, "initial state");
    return z;
}

EvalConfig parse_eval_config(const std::string& text) {
    const json j = parse_json(text, "eval config");
    ObjectReader r(j, "");
    EvalConfig c;
    c.motion_type = motion_from(r);
    r.read("fps", c.pis.fps);
    r.read("meters_per_pixel", c.pis.meters_per_pixel);
    r.read("smoothing_window", c.pis.smoothing_window);
    r.read("eps", c.pis.eps);
    if (auto p = r.opt<Vec2>("pivot")) c.pis.pivot = *p;
    r.finish();
    c.pis.validate();
    return c;
}

PipelinePrompt parse_pipeline_prompt(const std::string& text, const fs::path& base_dir) {
    const json j = parse_json(text, "prompt");
    ObjectReader r(j, "");
    PipelinePrompt p;
    fs::path ck = r.req<std::string>("checkpoint");
    p.checkpoint = ck.is_relative() ? base_dir / ck : ck;
    if (r.has("world")) p.world = world_from(r.child("world"), "world", WorldConfig{});
    if (!r.has("shape")) throw ConfigError("missing field 'shape'");
    p.shape = shape_from(r.child("shape"), "shape");
    if (!r.has("z0")) throw ConfigError("missing field 'z0'");
    p.z0 = parse_state_json(r.child("z0").dump(), p.shape);
    p.n_frames = r.opt<int>("n_frames").value_or(p.world.n_frames);
    p.fps = r.opt<double>("fps").value_or(p.world.fps);
    if (p.n_frames < 1) throw ConfigError("field 'n_frames' must be >= 1");
    if (!(p.fps > 0.0)) throw ConfigError("field 'fps' must be > 0");
    p.world.n_frames = p.n_frames;
    p.world.fps = p.fps;
    if (r.has("flow")) {
        ObjectReader fr(r.child("flow"), "flow");
        fr.read("spatial_factor", p.spatial_factor);
        fr.read("temporal_stride", p.temporal_stride);
        fr.finish();
        if (p.spatial_factor < 1) throw ConfigError("field 'flow.spatial_factor' must be >= 1");
        if (p.temporal_stride < 1) throw ConfigError("field 'flow.temporal_stride' must be >= 1");
    }
    r.read("self_eval", p.self_eval);
    if (auto pv = r.opt<Vec2>("pivot")) p.pivot = *pv;
    r.finish();
    return p;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

} // namespace nnd
