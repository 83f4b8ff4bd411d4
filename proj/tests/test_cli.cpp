#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "g4d/io.hpp"
#include "g4d/oracle.hpp"
#include "g4d/pipeline.hpp"
#include "support/helpers.hpp"

using namespace g4d;
using namespace g4dtest;
using nlohmann::json;

namespace {

EditSession rigid_session(int n, int frames, uint64_t seed) {
    OracleScene scene = make_rigid_scene(n, {0, 0, 1}, 0.15, frames, seed, false);
    EditSession session;
    session.source_cloud = scene.source;
    session.edited_cloud = scene.edited;
    session.deformation = scene.field;
    session.cameras = scene.cameras;
    session.params.n_rays = 20000;
    session.params.refine_steps = 3;
    session.params.seed = seed;
    return session;
}

bool exists(const std::string& dir, const char* name) {
    return std::filesystem::exists(std::filesystem::path(dir) / name);
}

} // namespace

// -------------------------------------------------------------------------
// Session config io
// -------------------------------------------------------------------------

TEST_CASE("loading a missing session names the offending path") {
    std::string path = temp_dir("missing") + "/absent.json";
    try {
        load_session(path);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::IoFailure);
        CHECK(std::string(e.what()).find(path) != std::string::npos);
    }
}

TEST_CASE("a saved session config loads back with identical settings") {
    EditSession session = rigid_session(20, 3, 3);
    session.params.k = 3;
    session.params.gamma = 0.07;
    session.params.zeta = 0.45;
    session.params.seed = 99;

    std::string dir = temp_dir("session");
    save_cloud(session.source_cloud, dir + "/source.g4dc");
    save_cloud(session.edited_cloud, dir + "/edited.g4dc");
    save_deformation(session.deformation, session.source_cloud, dir + "/motion.g4df");
    save_session_config(session, "source.g4dc", "edited.g4dc", "motion.g4df",
                        dir + "/session.json");

    EditSession back = load_session(dir + "/session.json");
    CHECK(back.source_cloud.size() == session.source_cloud.size());
    CHECK(back.edited_cloud.size() == session.edited_cloud.size());
    CHECK(back.source_cloud.sh_degree == session.source_cloud.sh_degree);
    CHECK(back.deformation.n_frames == session.deformation.n_frames);
    REQUIRE(back.cameras.size() == session.cameras.size());
    for (size_t v = 0; v < back.cameras.size(); ++v) {
        CHECK(bits_equal(back.cameras[v].fx, session.cameras[v].fx));
        CHECK(bits_equal(back.cameras[v].cx, session.cameras[v].cx));
        CHECK(back.cameras[v].width == session.cameras[v].width);
    }
    CHECK(back.params.k == 3);
    CHECK(bits_equal(back.params.gamma, 0.07));
    CHECK(bits_equal(back.params.zeta, 0.45));
    CHECK(back.params.seed == 99);
    CHECK(back.params.n_rays == session.params.n_rays);

    // The loaded clouds match a direct load of the same files.
    CHECK(cloud_bits_equal(back.source_cloud, load_cloud(dir + "/source.g4dc")));
}

TEST_CASE("unknown or invalid params keys are rejected") {
    std::string dir = temp_dir("params");
    {
        std::ofstream f(dir + "/bogus.json");
        f << R"({"params": {"bogus": 1}})";
    }
    try {
        params_from_json_file(dir + "/bogus.json");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BadConfig);
        CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
    {
        std::ofstream f(dir + "/invalid.json");
        f << R"({"params": {"k": 0}})";
    }
    try {
        params_from_json_file(dir + "/invalid.json");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BadConfig);
    }

    // Defaults apply when the params block is absent.
    {
        std::ofstream f(dir + "/empty.json");
        f << "{}";
    }
    PipelineParams p = params_from_json_file(dir + "/empty.json");
    CHECK(p.k == 2);
    CHECK(p.n_rays == 300000);
    CHECK(bits_equal(p.gamma, 0.05));
    CHECK(bits_equal(p.eta, 0.2));
    CHECK(bits_equal(p.zeta, 0.3));
}

// -------------------------------------------------------------------------
// Pipeline runs
// -------------------------------------------------------------------------

TEST_CASE("an unknown stage name is rejected before any work") {
    EditSession session = rigid_session(20, 2, 5);
    RunOptions opts;
    opts.out_dir = temp_dir("badstage");
    opts.stop_after = "polish";
    try {
        run_pipeline(session, opts);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BadConfig);
    }
}

TEST_CASE("stopping after anchors writes only the anchor artifacts") {
    EditSession session = rigid_session(20, 2, 7);
    RunOptions opts;
    opts.out_dir = temp_dir("anchors_only");
    opts.stop_after = "anchors";
    RunSummary summary = run_pipeline(session, opts);
    CHECK(summary.exit_code == 0);
    CHECK(exists(opts.out_dir, "report.json"));
    CHECK(exists(opts.out_dir, "anchors_source.json"));
    CHECK(exists(opts.out_dir, "anchors_edit.json"));
    CHECK_FALSE(exists(opts.out_dir, "correspondence.json"));
    CHECK_FALSE(exists(opts.out_dir, "propagated_f001.g4dc"));
    CHECK_FALSE(exists(opts.out_dir, "render_f001_v00.png"));

    json report = json::parse(std::ifstream(summary.report_path));
    CHECK(report.contains("anchors"));
    CHECK_FALSE(report.contains("match"));
}

TEST_CASE("a small rigid session runs end to end with tiny drift") {
    EditSession session = rigid_session(60, 4, 9);
    RunOptions opts;
    opts.out_dir = temp_dir("full_run");
    RunSummary summary = run_pipeline(session, opts);
    CHECK(summary.exit_code == 0);

    for (int t = 1; t <= 4; ++t) {
        std::string prop = "propagated_f00" + std::to_string(t) + ".g4dc";
        std::string refd = "refined_f00" + std::to_string(t) + ".g4dc";
        CHECK(exists(opts.out_dir, prop.c_str()));
        CHECK(exists(opts.out_dir, refd.c_str()));
    }
    CHECK(exists(opts.out_dir, "render_f001_v00.png"));
    CHECK(exists(opts.out_dir, "render_f004_v01.png"));
    CHECK(exists(opts.out_dir, "loss_trace.csv"));

    json report = json::parse(std::ifstream(summary.report_path));
    CHECK(report["config"]["k"] == 2);
    CHECK(report["config"]["n_rays"] == 20000);
    REQUIRE(report["propagate"]["ndd"].is_array());
    REQUIRE(report["propagate"]["ndd"].size() == 4);
    for (const json& v : report["propagate"]["ndd"]) CHECK(v.get<double>() < 1e-6);
    CHECK(report["match"]["converged"].get<bool>());
}

TEST_CASE("identical sessions produce byte-identical artifacts") {
    EditSession session = rigid_session(30, 3, 21);
    RunOptions a, b;
    a.out_dir = temp_dir("det_a");
    b.out_dir = temp_dir("det_b");
    CHECK(run_pipeline(session, a).exit_code == 0);
    CHECK(run_pipeline(session, b).exit_code == 0);

    int compared = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a.out_dir)) {
        std::string name = entry.path().filename().string();
        std::string ext = entry.path().extension().string();
        if (ext != ".g4dc" && ext != ".png") continue;
        std::string other = b.out_dir + "/" + name;
        REQUIRE(std::filesystem::exists(other));
        CHECK(read_bytes(entry.path().string()) == read_bytes(other));
        ++compared;
    }
    CHECK(compared >= 10);
}
