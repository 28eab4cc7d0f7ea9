#include <doctest.h>

#include <algorithm>
#include <clocale>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include <unistd.h>

#include "fabsim/error.hpp"
#include "fabsim/io.hpp"

using namespace fabsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("fabsim_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

PointCloudSequence random_sequence(std::size_t frames, std::size_t points, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    PointCloudSequence s;
    for (std::size_t k = 0; k < frames; ++k) {
        PointCloud c;
        for (std::size_t i = 0; i < points; ++i) c.emplace_back(g(rng), g(rng), g(rng) * 1e-7);
        s.frames.push_back(c);
        s.frame_times.push_back(static_cast<double>(k) / 15.0);
    }
    return s;
}

std::vector<std::string> body_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        if (!l.empty() && l[0] != '#') out.push_back(l);
    return out;
}

MarkerDataset small_markers() {
    std::vector<Vec2> rest{Vec2(0, 0), Vec2(0.45, 0), Vec2(0, 0.45)};
    std::vector<std::vector<Vec2>> u{{Vec2(0, 0), Vec2(0.001, 0), Vec2(0, -0.002)},
                                     {Vec2(0.1, 0.2), Vec2(0.3, 0.4), Vec2(0.5, 0.6)}};
    return make_marker_dataset(rest, {0.0, 1.0 / 30.0}, u);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("number formatting round trips exactly") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int k = 0; k < 2000; ++k) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        CHECK(parse_double(format_double(v), 1) == v);
    }
    CHECK(format_double(0.5) == "0.5");
    CHECK(parse_double("-0", 1) == 0.0);
    CHECK_THROWS_AS(parse_double("1.5x", 3), ParseError);
    CHECK_THROWS_AS(parse_double("nan", 3), ParseError);
    CHECK_THROWS_AS(parse_double("", 3), ParseError);
    try {
        parse_double("abc", 7);
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
    }
}

TEST_CASE("sequence write then read is bit identical") {
    TempDir dir;
    const auto seq = random_sequence(61, 40, 2);
    write_pointcloud_sequence(dir.path / "a.csv", seq);
    const auto back = read_pointcloud_sequence(dir.path / "a.csv");
    CHECK(back.frames == seq.frames);
    CHECK(back.frame_times == seq.frame_times);
    CHECK(read_file(dir.path / "a.csv").rfind(std::string(kFormatHeader) + "\n", 0) == 0);
}

TEST_CASE("irregular frame times survive the round trip") {
    auto seq = random_sequence(4, 3, 3);
    seq.frame_times = {0.0, 0.1, 0.25, 0.7};
    const auto back = parse_pointcloud_sequence(format_pointcloud_sequence(seq));
    CHECK(back.frame_times == seq.frame_times);
}

TEST_CASE("a missing frame is named") {
    const std::string text =
        "# fabsim-r2s v1\nframe,point_id,x,y,z\n0,0,0,0,0\n2,0,1,1,1\n";
    try {
        parse_pointcloud_sequence(text);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("frame 1 is missing") != std::string::npos);
        CHECK(e.line() == 4);
    }
}

TEST_CASE("single frame single point has a two line body") {
    PointCloudSequence seq;
    seq.frames = {{Vec3::Zero()}};
    seq.frame_times = {0.0};
    const auto lines = body_lines(format_pointcloud_sequence(seq));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "frame,point_id,x,y,z");
    CHECK(lines[1] == "0,0,0,0,0");
}

TEST_CASE("malformed sequences are rejected with line numbers") {
    auto fails_at = [](const std::string& text, std::size_t line) {
        try {
            parse_pointcloud_sequence(text);
            return false;
        } catch (const ParseError& e) {
            return e.line() == line;
        }
    };
    CHECK(fails_at("frame,id,x,y,z\n0,0,0,0,0\n", 1));
    CHECK(fails_at("frame,point_id,x,y,z\n0,0,0,0\n", 2));
    CHECK(fails_at("frame,point_id,x,y,z\n0,0,0,0,inf\n", 2));
    CHECK(fails_at("frame,point_id,x,y,z\n0,0,0,0,0\n0,2,0,0,0\n", 3));
    CHECK(fails_at("frame,point_id,x,y,z\n0,0,0,0,0\n1,0,0,0,0\n0,1,0,0,0\n", 4));
    CHECK_THROWS_AS(parse_pointcloud_sequence("frame,point_id,x,y,z\n"), ParseError);
}

TEST_CASE("ply round trip and frame export") {
    TempDir dir;
    const auto seq = random_sequence(3, 17, 4);
    write_ply(dir.path / "one.ply", seq.frames[0]);
    CHECK(read_ply(dir.path / "one.ply") == seq.frames[0]);
    const std::string text = format_ply(seq.frames[1]);
    CHECK(text.rfind("ply\nformat ascii 1.0\n", 0) == 0);
    CHECK(text.find("element vertex 17\n") != std::string::npos);
    CHECK(text.find("property double x\nproperty double y\nproperty double z\n") != std::string::npos);
    const auto files = write_ply_frames(dir.path / "frames", seq);
    REQUIRE(files.size() == 3);
    CHECK(files[2].filename() == "frame_0002.ply");
    for (std::size_t k = 0; k < 3; ++k) CHECK(read_ply(files[k]) == seq.frames[k]);
    CHECK_THROWS_AS(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n"), ParseError);
    CHECK_THROWS_AS(parse_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
                              "property double z\nend_header\n0 0 0\n"),
                    ParseError);
}

TEST_CASE("marker dataset round trip") {
    TempDir dir;
    const MarkerDataset d = small_markers();
    write_marker_dataset(dir.path / "m.csv", d);
    const MarkerDataset back = read_marker_dataset(dir.path / "m.csv");
    CHECK(back.rest == d.rest);
    CHECK(back.times == d.times);
    CHECK(back.displacements == d.displacements);
    CHECK(back.normalization.u_scale == d.normalization.u_scale);
    CHECK(body_lines(format_marker_dataset(d))[0] == "frame,t,marker_id,X,Y,ux,uy");
}

TEST_CASE("shuffled marker rows parse to the same dataset") {
    const MarkerDataset d = small_markers();
    auto lines = body_lines(format_marker_dataset(d));
    std::vector<std::string> rows(lines.begin() + 1, lines.end());
    std::mt19937_64 rng(5);
    std::shuffle(rows.begin(), rows.end(), rng);
    std::string text = lines[0] + "\n";
    for (const auto& r : rows) text += r + "\n";
    const MarkerDataset back = parse_marker_dataset(text);
    CHECK(back.rest == d.rest);
    CHECK(back.displacements == d.displacements);
}

TEST_CASE("duplicate and missing markers are rejected") {
    const std::string head = "frame,t,marker_id,X,Y,ux,uy\n";
    const std::string ok = "0,0,0,0,0,0,0\n0,0,1,1,0,0,0\n1,0.5,0,0,0,0.1,0\n1,0.5,1,1,0,0,0\n";
    CHECK_NOTHROW(parse_marker_dataset(head + ok));
    try {
        parse_marker_dataset(head + ok + "1,0.5,1,1,0,0,0\n");
        FAIL("duplicate accepted");
    } catch (const ParseError& e) {
        CHECK(e.line() == 6);
    }
    try {
        parse_marker_dataset(head + "0,0,0,0,0,0,0\n0,0,1,1,0,0,0\n1,0.5,0,0,0,0.1,0\n");
        FAIL("missing marker accepted");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("marker 1") != std::string::npos);
    }
}

TEST_CASE("trajectory logs") {
    CHECK_THROWS_AS(parse_trajectory("[]"), ParseError);
    CHECK_THROWS_AS(parse_trajectory(R"([{"t": 1, "handle": "top_left", "position": [0, 0, 0]},
                                          {"t": 0.5, "handle": "top_left", "position": [0, 0, 1]}])"),
                    ParseError);
    CHECK_THROWS_AS(parse_trajectory(R"([{"t": 1, "handle": "top_left", "position": [0, 0]}])"), ParseError);
    const auto one = parse_trajectory(R"([{"t": 0.2, "handle": "top_right", "position": [1, 2, 3]}])");
    REQUIRE(one.at("top_right").size() == 1);
    CHECK(interpolate_keyframes(one.at("top_right"), 3.0) == Vec3(1, 2, 3));

    TrajectoryLog log;
    for (int k = 0; k <= 60; ++k) {
        const double t = k / 15.0;
        log["top_left"].push_back({t, Vec3(0, 0.45, 0.1 * t)});
        log["top_right"].push_back({t, Vec3(0.45, 0.45, 0.05 * t)});
    }
    TempDir dir;
    write_trajectory(dir.path / "g.json", log);
    const auto back = read_trajectory(dir.path / "g.json");
    CHECK(back.at("top_left").size() == 61);
    CHECK(back.at("top_right").size() == 61);
    CHECK(back.at("top_right")[60].position == log["top_right"][60].position);
    CHECK(back.at("top_right")[60].t == log["top_right"][60].t);

    const ClothMesh mesh = build_grid_mesh(9, 9, 0.45);
    Scenario s = make_scenario(ScenarioKind::lifting, {}, mesh);
    apply_trajectory(s, back);
    CHECK(s.handles.size() == 2);
    CHECK_NOTHROW(validate(s, mesh));
}

TEST_CASE("repeated trajectory times keep the last sample") {
    const auto log = parse_trajectory(R"([{"t": 0, "handle": "top_left", "position": [0, 0, 0]},
                                          {"t": 0, "handle": "top_left", "position": [0, 0, 1]},
                                          {"t": 1, "handle": "top_left", "position": [0, 0, 2]}])");
    REQUIRE(log.at("top_left").size() == 2);
    CHECK(log.at("top_left")[0].position.z() == 1.0);
}

TEST_CASE("materials and pinn models serialize") {
    for (const Material m : {Material{AnisotropicStiffness{50, 5.5, 49, 20.25}}, Material{IsotropicMaterial{3.5, 0.3}}}) {
        const Material back = material_from_json(parse_json_document(format_json_document(material_to_json(m))));
        CHECK(material_parameters(back) == material_parameters(m));
        CHECK(back.index() == m.index());
    }
    CHECK_THROWS_AS(material_from_json(nlohmann::json{{"kind", "rubber"}}), ValidationError);
    CHECK_THROWS_AS(material_from_json(nlohmann::json{{"kind", "isotropic"}, {"E", 1.0}}), ValidationError);

    TempDir dir;
    PinnModel model{MlpNet::glorot({3, 5, 5, 2}, 7, false), Normalization{0, 0.45, 0, 0.45, 0, 2, 0.01},
                    IsotropicMaterial{1.5, 0.3}};
    write_pinn_model(dir.path / "model.json", model);
    const PinnModel back = read_pinn_model(dir.path / "model.json");
    CHECK(back.net.widths() == model.net.widths());
    CHECK(back.net.flatten() == model.net.flatten());
    CHECK(back.normalization.t_span == 2.0);
    CHECK(back.normalization.u_scale == 0.01);
    CHECK(net_eval(back.net, 0.1, 0.2, 0.3) == net_eval(model.net, 0.1, 0.2, 0.3));
}

TEST_CASE("json documents carry the header and accept comments") {
    const std::string text = format_json_document(nlohmann::json{{"a", 1}});
    CHECK(text.rfind(std::string(kFormatHeader) + "\n", 0) == 0);
    CHECK(parse_json_document("# note\n{\"a\": 2}\n")["a"] == 2);
    CHECK_THROWS_AS(parse_json_document("{\"a\": }"), ParseError);
}

TEST_CASE("atomic writes leave no temporary behind") {
    TempDir dir;
    write_file_atomic(dir.path / "sub" / "x.txt", "one");
    write_file_atomic(dir.path / "sub" / "x.txt", "two");
    CHECK(read_file(dir.path / "sub" / "x.txt") == "two");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir.path / "sub")) files += e.is_regular_file();
    CHECK(files == 1);
    CHECK_THROWS_AS(read_file(dir.path / "nope.txt"), ValidationError);
}

TEST_CASE("series csv") {
    const std::string text = format_series_csv({"data", "pde"}, {{1.0, 0.5}, {2.0, 0.25}});
    const auto lines = body_lines(text);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "index,data,pde");
    CHECK(lines[1] == "0,1,2");
    CHECK(lines[2] == "1,0.5,0.25");
}

TEST_CASE("formats ignore the C locale") {
    const char* previous = std::setlocale(LC_NUMERIC, nullptr);
    const std::string saved = previous ? previous : "C";
    const bool switched = std::setlocale(LC_NUMERIC, "de_DE.UTF-8") || std::setlocale(LC_NUMERIC, "fr_FR.UTF-8");
    const auto seq = random_sequence(2, 3, 8);
    const std::string text = format_pointcloud_sequence(seq);
    const auto back = parse_pointcloud_sequence(text);
    std::setlocale(LC_NUMERIC, saved.c_str());
    CHECK(back.frames == seq.frames);
    CHECK(text.find("0,0,") != std::string::npos);
    CHECK(format_double(0.25) == "0.25");
    CHECK(text.find('\r') == std::string::npos);
    if (!switched) MESSAGE("no comma-decimal locale installed; checked under the default locale only");
}

}
