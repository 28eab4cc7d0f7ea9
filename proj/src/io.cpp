#include "fabsim/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include "fabsim/error.hpp"

namespace fabsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

// Splits into lines, keeping 1-based line numbers.
std::vector<std::pair<std::size_t, std::string_view>> lines_of(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> out;
    std::size_t no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const auto line = text.substr(0, nl);
        out.emplace_back(++no, trim(line));
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    while (true) {
        const auto p = s.find(sep);
        out.push_back(trim(s.substr(0, p)));
        if (p == std::string_view::npos) break;
        s.remove_prefix(p + 1);
    }
    return out;
}

long long parse_int(std::string_view text, std::size_t line) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError("expected an integer, got '" + std::string(text) + "'", line);
    return v;
}

void expect_header(const std::vector<std::pair<std::size_t, std::string_view>>& lines, std::size_t& at,
                   std::string_view header) {
    while (at < lines.size() && (lines[at].second.empty() || lines[at].second.front() == '#')) ++at;
    if (at == lines.size()) throw ParseError("missing column header '" + std::string(header) + "'", 0);
    if (lines[at].second != header) {
        throw ParseError("expected column header '" + std::string(header) + "', got '" +
                             std::string(lines[at].second) + "'",
                         lines[at].first);
    }
    ++at;
}

std::vector<std::string_view> fields(std::string_view line, std::size_t count, std::size_t no) {
    auto f = split(line, ',');
    if (f.size() != count) {
        throw ParseError("expected " + std::to_string(count) + " fields, got " + std::to_string(f.size()), no);
    }
    return f;
}

// Uniform k / rate spacing recoverable exactly from a single rate, or 0.
double exact_frame_rate(const std::vector<double>& times) {
    if (times.size() < 2 || !(times.back() > 0.0)) return 0.0;
    const double candidates[] = {static_cast<double>(times.size() - 1) / times.back(), 1.0 / times[1],
                                 std::round(1.0 / times[1])};
    for (double r : candidates) {
        bool ok = std::isfinite(r) && r > 0.0;
        for (std::size_t k = 0; ok && k < times.size(); ++k) ok = static_cast<double>(k) / r == times[k];
        if (ok) return r;
    }
    return 0.0;
}

const json& member(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    return j.at(key);
}

double number(const json& j, const char* key) {
    const auto& v = member(j, key);
    if (!v.is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::size_t line) {
    double v = 0.0;
    const auto* begin = text.data();
    if (!text.empty() && text.front() == '+') ++begin;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v, std::chars_format::general);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw ParseError("expected a number, got '" + std::string(text) + "'", line);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value '" + std::string(text) + "'", line);
    return v;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw std::runtime_error("failed writing '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- point cloud sequences -------------------------------------------------

std::string format_pointcloud_sequence(const PointCloudSequence& seq) {
    validate(seq);
    std::string out;
    out.reserve(64 + seq.size() * (seq.frames.empty() ? 0 : seq.frames[0].size()) * 72);
    out += kFormatHeader;
    out += '\n';
    bool default_times = true;
    for (std::size_t k = 0; k < seq.frame_times.size(); ++k) default_times &= seq.frame_times[k] == static_cast<double>(k);
    if (!default_times) {
        if (const double r = exact_frame_rate(seq.frame_times); r > 0.0) {
            out += "# frame_rate " + format_double(r) + '\n';
        } else {
            out += "# frame_times";
            for (double t : seq.frame_times) out += ' ' + format_double(t);
            out += '\n';
        }
    }
    out += "frame,point_id,x,y,z\n";
    for (std::size_t k = 0; k < seq.size(); ++k) {
        const auto ks = std::to_string(k) + ',';
        for (std::size_t i = 0; i < seq.frames[k].size(); ++i) {
            const auto& p = seq.frames[k][i];
            if (!p.allFinite()) throw ValidationError("non-finite point in frame " + std::to_string(k));
            out += ks;
            out += std::to_string(i);
            for (int a = 0; a < 3; ++a) {
                out += ',';
                out += format_double(p[a]);
            }
            out += '\n';
        }
    }
    return out;
}

PointCloudSequence parse_pointcloud_sequence(std::string_view text) {
    const auto lines = lines_of(text);
    double rate = 0.0;
    std::vector<double> times;
    std::size_t times_line = 0;
    for (const auto& [no, l] : lines) {
        if (l.rfind("# frame_rate", 0) == 0) {
            rate = parse_double(trim(l.substr(12)), no);
            if (!(rate > 0.0)) throw ParseError("frame_rate must be positive", no);
        } else if (l.rfind("# frame_times", 0) == 0) {
            times_line = no;
            std::istringstream ss{std::string(l.substr(13))};
            std::string tok;
            while (ss >> tok) times.push_back(parse_double(tok, no));
        }
    }

    std::size_t at = 0;
    expect_header(lines, at, "frame,point_id,x,y,z");
    PointCloudSequence seq;
    for (; at < lines.size(); ++at) {
        const auto& [no, l] = lines[at];
        if (l.empty() || l.front() == '#') continue;
        const auto f = fields(l, 5, no);
        const long long frame = parse_int(f[0], no);
        const long long id = parse_int(f[1], no);
        const auto expected_new = static_cast<long long>(seq.frames.size());
        if (frame == expected_new) {
            seq.frames.emplace_back();
        } else if (frame > expected_new) {
            throw ParseError("frame " + std::to_string(expected_new) + " is missing", no);
        } else if (frame != expected_new - 1) {
            throw ParseError("frame " + std::to_string(frame) + " is out of order", no);
        }
        auto& cloud = seq.frames.back();
        if (id != static_cast<long long>(cloud.size())) {
            throw ParseError("point_id " + std::to_string(id) + " out of sequence in frame " + std::to_string(frame) +
                                 " (expected " + std::to_string(cloud.size()) + ")",
                             no);
        }
        cloud.emplace_back(parse_double(f[2], no), parse_double(f[3], no), parse_double(f[4], no));
    }
    if (seq.frames.empty()) throw ParseError("sequence has no frames", 0);

    if (!times.empty()) {
        if (times.size() != seq.size()) throw ParseError("frame_times count does not match the frames", times_line);
        seq.frame_times = std::move(times);
    } else {
        seq.frame_times.resize(seq.size());
        for (std::size_t k = 0; k < seq.size(); ++k) {
            seq.frame_times[k] = rate > 0.0 ? static_cast<double>(k) / rate : static_cast<double>(k);
        }
    }
    return seq;
}

void write_pointcloud_sequence(const fs::path& path, const PointCloudSequence& seq) {
    write_file_atomic(path, format_pointcloud_sequence(seq));
}

PointCloudSequence read_pointcloud_sequence(const fs::path& path) {
    try {
        return parse_pointcloud_sequence(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

// ---- PLY -------------------------------------------------------------------

std::string format_ply(const PointCloud& cloud) {
    std::string out = "ply\nformat ascii 1.0\ncomment ";
    out += kFormatHeader.substr(2);
    out += "\nelement vertex " + std::to_string(cloud.size()) +
           "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const auto& p : cloud) {
        if (!p.allFinite()) throw ValidationError("non-finite point in PLY export");
        out += format_double(p.x()) + ' ' + format_double(p.y()) + ' ' + format_double(p.z()) + '\n';
    }
    return out;
}

PointCloud parse_ply(std::string_view text) {
    const auto lines = lines_of(text);
    if (lines.empty() || lines[0].second != "ply") throw ParseError("not a PLY file", 1);
    std::size_t at = 1, count = 0;
    bool have_vertex = false, ascii = false;
    std::vector<std::string> props;
    for (; at < lines.size(); ++at) {
        const auto& [no, l] = lines[at];
        std::istringstream ss{std::string(l)};
        std::string key;
        ss >> key;
        if (key == "end_header") {
            ++at;
            break;
        }
        if (key == "format") {
            std::string kind, version;
            ss >> kind >> version;
            if (kind != "ascii" || version != "1.0") throw ParseError("only ASCII PLY 1.0 is supported", no);
            ascii = true;
        } else if (key == "element") {
            std::string name;
            long long n = -1;
            ss >> name >> n;
            if (name != "vertex" || have_vertex || n < 0) throw ParseError("expected a single vertex element", no);
            have_vertex = true;
            count = static_cast<std::size_t>(n);
        } else if (key == "property") {
            std::string type, name;
            ss >> type >> name;
            if (type != "double" && type != "float64" && type != "float" && type != "float32") {
                throw ParseError("unsupported property type '" + type + "'", no);
            }
            props.push_back(name);
        } else if (key != "comment" && key != "obj_info" && !key.empty()) {
            throw ParseError("unexpected header line '" + std::string(l) + "'", no);
        }
    }
    if (!ascii || !have_vertex) throw ParseError("PLY header lacks format or vertex element", 0);
    if (props != std::vector<std::string>{"x", "y", "z"}) throw ParseError("vertex properties must be x y z", 0);
    PointCloud cloud;
    cloud.reserve(count);
    for (; at < lines.size() && cloud.size() < count; ++at) {
        const auto& [no, l] = lines[at];
        if (l.empty()) continue;
        std::vector<std::string_view> f;
        for (auto tok : split(l, ' ')) {
            if (!tok.empty()) f.push_back(tok);
        }
        if (f.size() != 3) throw ParseError("expected 3 coordinates", no);
        cloud.emplace_back(parse_double(f[0], no), parse_double(f[1], no), parse_double(f[2], no));
    }
    if (cloud.size() != count) throw ParseError("PLY body ended after " + std::to_string(cloud.size()) + " vertices", 0);
    return cloud;
}

void write_ply(const fs::path& path, const PointCloud& cloud) { write_file_atomic(path, format_ply(cloud)); }

PointCloud read_ply(const fs::path& path) { return parse_ply(read_file(path)); }

std::vector<fs::path> write_ply_frames(const fs::path& dir, const PointCloudSequence& seq) {
    std::vector<fs::path> paths;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        std::string name = std::to_string(k);
        name = "frame_" + std::string(name.size() < 4 ? 4 - name.size() : 0, '0') + name + ".ply";
        paths.push_back(dir / name);
        write_ply(paths.back(), seq.frames[k]);
    }
    return paths;
}

// ---- markers ---------------------------------------------------------------

std::string format_marker_dataset(const MarkerDataset& data) {
    std::string out(kFormatHeader);
    out += "\nframe,t,marker_id,X,Y,ux,uy\n";
    for (std::size_t k = 0; k < data.frames(); ++k) {
        for (std::size_t i = 0; i < data.markers(); ++i) {
            const auto& u = data.displacements[k][i];
            out += std::to_string(k) + ',' + format_double(data.times[k]) + ',' + std::to_string(i) + ',' +
                   format_double(data.rest[i].x()) + ',' + format_double(data.rest[i].y()) + ',' +
                   format_double(u.x()) + ',' + format_double(u.y()) + '\n';
        }
    }
    return out;
}

MarkerDataset parse_marker_dataset(std::string_view text) {
    const auto lines = lines_of(text);
    std::size_t at = 0;
    expect_header(lines, at, "frame,t,marker_id,X,Y,ux,uy");

    struct Row {
        double t;
        Vec2 rest, u;
        std::size_t line;
    };
    std::map<long long, std::map<long long, Row>> rows;
    std::set<long long> ids;
    for (; at < lines.size(); ++at) {
        const auto& [no, l] = lines[at];
        if (l.empty() || l.front() == '#') continue;
        const auto f = fields(l, 7, no);
        const long long frame = parse_int(f[0], no);
        const long long id = parse_int(f[2], no);
        if (frame < 0 || id < 0) throw ParseError("frame and marker_id must be non-negative", no);
        Row r{parse_double(f[1], no),
              {parse_double(f[3], no), parse_double(f[4], no)},
              {parse_double(f[5], no), parse_double(f[6], no)},
              no};
        if (!rows[frame].emplace(id, r).second) {
            throw ParseError("duplicate row for frame " + std::to_string(frame) + ", marker " + std::to_string(id),
                             no);
        }
        ids.insert(id);
    }
    if (rows.empty()) throw ParseError("marker file has no rows", 0);

    const std::vector<long long> id_list(ids.begin(), ids.end());
    std::vector<Vec2> rest;
    std::vector<double> times;
    std::vector<std::vector<Vec2>> disp;
    long long expected_frame = 0;
    for (const auto& [frame, by_id] : rows) {
        if (frame != expected_frame) throw ParseError("frame " + std::to_string(expected_frame) + " is missing", 0);
        ++expected_frame;
        const Row& first = by_id.begin()->second;
        std::vector<Vec2> u;
        u.reserve(id_list.size());
        for (std::size_t i = 0; i < id_list.size(); ++i) {
            const auto it = by_id.find(id_list[i]);
            if (it == by_id.end()) {
                throw ParseError("frame " + std::to_string(frame) + " is missing marker " + std::to_string(id_list[i]),
                                 0);
            }
            const Row& r = it->second;
            if (r.t != first.t) throw ParseError("inconsistent t within frame " + std::to_string(frame), r.line);
            if (frame == 0) {
                rest.push_back(r.rest);
            } else if (r.rest != rest[i]) {
                throw ParseError("marker " + std::to_string(id_list[i]) + " changes its rest position", r.line);
            }
            u.push_back(r.u);
        }
        times.push_back(first.t);
        disp.push_back(std::move(u));
    }
    try {
        return make_marker_dataset(std::move(rest), std::move(times), std::move(disp));
    } catch (const ParseError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), 0);
    }
}

void write_marker_dataset(const fs::path& path, const MarkerDataset& data) {
    write_file_atomic(path, format_marker_dataset(data));
}

MarkerDataset read_marker_dataset(const fs::path& path) {
    try {
        return parse_marker_dataset(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

// ---- JSON documents ----------------------------------------------------------

json parse_json_document(std::string_view text) {
    // Blank out comment lines so byte offsets keep their line numbers.
    std::string body(text);
    std::size_t start = 0;
    while (start < body.size()) {
        auto end = body.find('\n', start);
        if (end == std::string::npos) end = body.size();
        auto first = body.find_first_not_of(" \t", start);
        if (first != std::string::npos && first < end && body[first] == '#') {
            std::fill(body.begin() + static_cast<std::ptrdiff_t>(start), body.begin() + static_cast<std::ptrdiff_t>(end),
                      ' ');
        }
        start = end + 1;
    }
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, body.size());
        const auto line = 1 + static_cast<std::size_t>(std::count(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
}

json read_json_document(const fs::path& path) {
    try {
        return parse_json_document(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

std::string format_json_document(const json& j) {
    return std::string(kFormatHeader) + '\n' + j.dump(2) + '\n';
}

void write_json_document(const fs::path& path, const json& j) { write_file_atomic(path, format_json_document(j)); }

// ---- trajectories ------------------------------------------------------------

TrajectoryLog parse_trajectory(std::string_view text) {
    const json j = parse_json_document(text);
    if (!j.is_array()) throw ParseError("trajectory must be a JSON array", 0);
    if (j.empty()) throw ParseError("trajectory is empty", 0);
    TrajectoryLog log;
    for (std::size_t n = 0; n < j.size(); ++n) {
        const auto& e = j[n];
        const std::string where = "trajectory entry " + std::to_string(n);
        if (!e.is_object() || !e.contains("t") || !e.contains("handle") || !e.contains("position")) {
            throw ParseError(where + " needs t, handle and position", 0);
        }
        if (!e["t"].is_number() || !e["handle"].is_string()) throw ParseError(where + " has a malformed t or handle", 0);
        const auto& p = e["position"];
        if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number()) {
            throw ParseError(where + ": position must be [x, y, z]", 0);
        }
        Keyframe k{e["t"].get<double>(), Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>())};
        if (!std::isfinite(k.t) || !k.position.allFinite()) throw ParseError(where + " is not finite", 0);
        auto& keys = log[e["handle"].get<std::string>()];
        if (!keys.empty() && k.t < keys.back().t) {
            throw ParseError(where + ": time decreases for handle '" + e["handle"].get<std::string>() + "'", 0);
        }
        if (!keys.empty() && k.t == keys.back().t) {
            keys.back() = k;
        } else {
            keys.push_back(k);
        }
    }
    return log;
}

TrajectoryLog read_trajectory(const fs::path& path) {
    try {
        return parse_trajectory(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

std::string format_trajectory(const TrajectoryLog& log) {
    json j = json::array();
    for (const auto& [handle, keys] : log) {
        for (const auto& k : keys) {
            j.push_back({{"t", k.t}, {"handle", handle}, {"position", {k.position.x(), k.position.y(), k.position.z()}}});
        }
    }
    return format_json_document(j);
}

void write_trajectory(const fs::path& path, const TrajectoryLog& log) { write_file_atomic(path, format_trajectory(log)); }

void apply_trajectory(Scenario& scenario, const TrajectoryLog& log) {
    if (log.empty()) throw ValidationError("trajectory has no handles");
    scenario.handles.clear();
    for (const auto& [handle, keys] : log) scenario.handles.push_back({handle, keys});
}

// ---- materials and models ----------------------------------------------------

json material_to_json(const Material& m) {
    if (const auto* c = std::get_if<AnisotropicStiffness>(&m)) {
        return {{"kind", "anisotropic"}, {"c11", c->c11}, {"c12", c->c12}, {"c22", c->c22}, {"c33", c->c33}};
    }
    const auto& iso = std::get<IsotropicMaterial>(m);
    return {{"kind", "isotropic"}, {"E", iso.youngs_modulus}, {"nu", iso.poissons_ratio}};
}

Material material_from_json(const json& j) {
    const auto& kind = member(j, "kind");
    Material m;
    if (kind == "anisotropic") {
        m = AnisotropicStiffness{number(j, "c11"), number(j, "c12"), number(j, "c22"), number(j, "c33")};
    } else if (kind == "isotropic") {
        m = IsotropicMaterial{number(j, "E"), number(j, "nu")};
    } else {
        throw ValidationError("material kind must be 'anisotropic' or 'isotropic'");
    }
    validate(m);
    return m;
}

json pinn_model_to_json(const PinnModel& model) {
    const auto& n = model.normalization;
    json layers = json::array();
    for (std::size_t l = 0; l < model.net.layer_count(); ++l) {
        const auto& w = model.net.weights[l];
        json rows = json::array();
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            rows.push_back(std::vector<double>(w.row(r).begin(), w.row(r).end()));
        }
        const auto& b = model.net.biases[l];
        layers.push_back({{"weights", rows}, {"biases", std::vector<double>(b.begin(), b.end())}});
    }
    return {{"widths", model.net.widths()},
            {"layers", layers},
            {"normalization",
             {{"x0", n.x0}, {"x_span", n.x_span}, {"y0", n.y0}, {"y_span", n.y_span}, {"t0", n.t0},
              {"t_span", n.t_span}, {"u_scale", n.u_scale}}},
            {"material", material_to_json(model.material)}};
}

PinnModel pinn_model_from_json(const json& j) {
    PinnModel m;
    const auto widths = member(j, "widths").get<std::vector<int>>();
    m.net = MlpNet(widths);
    const auto& layers = member(j, "layers");
    if (!layers.is_array() || layers.size() != m.net.layer_count()) throw ValidationError("model layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& w = m.net.weights[l];
        auto& b = m.net.biases[l];
        const auto rows = member(layers[l], "weights").get<std::vector<std::vector<double>>>();
        const auto bias = member(layers[l], "biases").get<std::vector<double>>();
        if (rows.size() != static_cast<std::size_t>(w.rows()) || bias.size() != static_cast<std::size_t>(b.size())) {
            throw ValidationError("model layer " + std::to_string(l) + " has the wrong shape");
        }
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            if (rows[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(w.cols())) {
                throw ValidationError("model layer " + std::to_string(l) + " has the wrong shape");
            }
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
        for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = bias[static_cast<std::size_t>(r)];
    }
    const auto& n = member(j, "normalization");
    m.normalization = {number(n, "x0"), number(n, "x_span"), number(n, "y0"),     number(n, "y_span"),
                       number(n, "t0"), number(n, "t_span"), number(n, "u_scale")};
    m.material = material_from_json(member(j, "material"));
    return m;
}

void write_pinn_model(const fs::path& path, const PinnModel& model) {
    write_json_document(path, pinn_model_to_json(model));
}

PinnModel read_pinn_model(const fs::path& path) { return pinn_model_from_json(read_json_document(path)); }

std::string format_series_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& series) {
    if (names.size() != series.size()) throw ValidationError("series names and columns differ in count");
    std::string out(kFormatHeader);
    out += "\nindex";
    for (const auto& n : names) out += ',' + n;
    out += '\n';
    std::size_t rows = 0;
    for (const auto& s : series) rows = std::max(rows, s.size());
    for (std::size_t r = 0; r < rows; ++r) {
        out += std::to_string(r);
        for (const auto& s : series) {
            out += ',';
            if (r < s.size()) out += format_double(s[r]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace fabsim
