#include "g4d/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "g4d/anchors.hpp"
#include "g4d/io.hpp"
#include "g4d/propagate.hpp"
#include "g4d/refine.hpp"
#include "g4d/render.hpp"
#include "g4d/uot.hpp"

namespace g4d {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

bool log_enabled() {
    const char* v = std::getenv("G4D_LOG");
    if (!v || !*v) return false;
    std::string s(v);
    return s != "0" && s != "quiet";
}

void log_line(const std::string& msg) {
    if (log_enabled()) std::fprintf(stderr, "[g4d] %s\n", msg.c_str());
}

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string zero_pad(int value, int width) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%0*d", width, value);
    return buf;
}

std::string frame_path(const fs::path& dir, const char* prefix, int t,
                       const char* ext = ".g4dc") {
    return (dir / (std::string(prefix) + "_f" + zero_pad(t, 3) + ext)).string();
}

json params_json(const PipelineParams& p) {
    json j;
    j["k"] = p.k;
    j["n_rays"] = p.n_rays;
    j["gamma"] = p.gamma;
    j["lambda0"] = p.lambda0;
    j["lambda1"] = p.lambda1;
    j["lambda2"] = p.lambda2;
    j["epsilon"] = p.epsilon;
    j["eta"] = p.eta;
    j["zeta"] = p.zeta;
    j["sinkhorn_tol"] = p.sinkhorn_tol;
    j["sinkhorn_max_iters"] = p.sinkhorn_max_iters;
    j["refine_lr"] = p.refine_lr;
    j["refine_steps"] = p.refine_steps;
    j["momentum"] = p.momentum;
    j["max_pairs_per_epoch"] = p.max_pairs_per_epoch;
    j["ndd_knn"] = p.ndd_knn;
    j["seed"] = p.seed;
    return j;
}

json anchor_stats(const AnchorSet& a) {
    json j;
    j["anchors"] = a.anchors.size();
    j["neighborhoods"] = a.n_neighborhoods;
    j["anchored"] = a.n_anchored;
    j["d_mean"] = a.d_mean;
    j["delta"] = a.delta;
    return j;
}

} // namespace

RunSummary run_pipeline(const EditSession& session, const RunOptions& opts) {
    validate_session(session);
    const std::vector<std::string> stages = {"anchors", "match", "propagate", "refine",
                                             "render"};
    if (!opts.stop_after.empty() &&
        std::find(stages.begin(), stages.end(), opts.stop_after) == stages.end())
        throw Error(ErrorKind::BadConfig, "unknown stage: " + opts.stop_after);

    fs::path out_dir(opts.out_dir);
    fs::create_directories(out_dir);

    const PipelineParams& params = session.params;
    json report;
    report["seed"] = params.seed;
    report["config"] = params_json(params);
    report["warnings"] = json::array();
    report["timings_ms"] = json::object();

    RunSummary summary;
    summary.report_path = (out_dir / "report.json").string();

    auto warn = [&](const char* stage, const std::string& msg) {
        report["warnings"].push_back({{"stage", stage}, {"message", msg}});
        log_line(std::string(stage) + ": " + msg);
    };
    auto finish = [&]() {
        std::ofstream f(summary.report_path, std::ios::binary);
        if (!f) throw Error(ErrorKind::IoFailure, "cannot open " + summary.report_path);
        f << report.dump(2) << "\n";
        if (!f) throw Error(ErrorKind::IoFailure, "write failed: " + summary.report_path);
        return summary;
    };

    // ---- anchors ---------------------------------------------------------
    log_line("stage anchors");
    auto t_start = Clock::now();
    std::vector<Vec3> all_centers;
    all_centers.reserve(session.source_cloud.size() + session.edited_cloud.size());
    for (const Gaussian& g : session.source_cloud.gaussians) all_centers.push_back(g.mu);
    for (const Gaussian& g : session.edited_cloud.gaussians) all_centers.push_back(g.mu);
    BoundingSphere sphere = bounding_sphere(all_centers);
    std::vector<Line> lines =
        sample_lines(sphere, params.n_rays, derive_seed(params.seed, "anchors"));

    NeighborhoodSet nb_src = build_neighborhoods(session.source_cloud, params.k);
    AnchorSet anchors_src = extract_anchors(session.source_cloud, lines, nb_src);
    NeighborhoodSet nb_edit = build_neighborhoods(session.edited_cloud, params.k);
    AnchorSet anchors_edit = extract_anchors(session.edited_cloud, lines, nb_edit);

    save_anchor_set(anchors_src, (out_dir / "anchors_source.json").string());
    save_anchor_set(anchors_edit, (out_dir / "anchors_edit.json").string());
    report["anchors"]["sphere"] = {{"center", {sphere.center.x, sphere.center.y,
                                               sphere.center.z}},
                                   {"radius", sphere.radius}};
    report["anchors"]["source"] = anchor_stats(anchors_src);
    report["anchors"]["edit"] = anchor_stats(anchors_edit);
    report["timings_ms"]["anchors"] = ms_since(t_start);
    if (opts.stop_after == "anchors") return finish();

    // ---- match -----------------------------------------------------------
    log_line("stage match");
    t_start = Clock::now();
    CostMatrix cost = welsch_cost(anchors_src.anchors, anchors_edit.anchors, params.gamma);
    SinkhornConfig scfg;
    scfg.lambda0 = params.lambda0;
    scfg.lambda1 = params.lambda1;
    scfg.lambda2 = params.lambda2;
    scfg.max_iters = params.sinkhorn_max_iters;
    scfg.tol = params.sinkhorn_tol;
    TransportPlan plan = sinkhorn_uot(cost, scfg);
    CorrespondenceMap corr = extract_correspondence(plan);
    save_correspondence(corr, plan, (out_dir / "correspondence.json").string());
    report["match"] = {{"rows", plan.n},
                       {"cols", plan.m},
                       {"beta", cost.beta},
                       {"d_med", cost.d_med},
                       {"iterations", plan.iterations},
                       {"converged", plan.converged},
                       {"residual", plan.marginal_err}};
    if (!plan.converged) {
        summary.exit_code = 2;
        warn("match", "sinkhorn did not converge within the iteration budget");
    }
    report["timings_ms"]["match"] = ms_since(t_start);
    if (opts.stop_after == "match") return finish();

    // ---- propagate -------------------------------------------------------
    log_line("stage propagate");
    t_start = Clock::now();
    InfluenceTable influence = build_influence(session.edited_cloud, session.source_cloud,
                                               anchors_src, anchors_edit, corr);
    PropagateWarnings pw;
    std::vector<GaussianCloud> sequence = propagate_sequence(
        session.edited_cloud, session.source_cloud, session.deformation, influence, &pw);
    for (size_t t = 1; t <= sequence.size(); ++t)
        save_cloud(sequence[t - 1], frame_path(out_dir, "propagated", int(t)));

    std::vector<Vec3> anchor_pos_1 = anchor_positions_at(anchors_edit, sequence[0]);
    json ndd = json::array();
    for (size_t t = 1; t <= sequence.size(); ++t) {
        std::vector<Vec3> anchor_pos_t = anchor_positions_at(anchors_edit, sequence[t - 1]);
        ndd.push_back(neighborhood_distance_deviation(anchor_pos_1, anchor_pos_t,
                                                      params.ndd_knn));
    }
    report["propagate"] = {{"frames", sequence.size()},
                           {"influence_fallbacks", influence.n_fallback},
                           {"weight_fallbacks", pw.weight_fallbacks},
                           {"degenerate_quaternions", pw.degenerate_quaternions},
                           {"ndd", ndd}};
    if (influence.n_fallback > 0)
        warn("propagate", std::to_string(influence.n_fallback) +
                              " gaussians used the nearest-anchor fallback");
    if (pw.weight_fallbacks > 0)
        warn("propagate", std::to_string(pw.weight_fallbacks) +
                              " gaussians used the nearest-source weight fallback");
    if (pw.degenerate_quaternions > 0)
        warn("propagate", std::to_string(pw.degenerate_quaternions) +
                              " aggregated quaternions were degenerate; frame-1 kept");
    report["timings_ms"]["propagate"] = ms_since(t_start);
    if (opts.stop_after == "propagate") return finish();

    // ---- refine ----------------------------------------------------------
    log_line("stage refine");
    t_start = Clock::now();
    RefineResult rr = refine(sequence, session.cameras, params);
    for (size_t t = 1; t <= rr.refined.size(); ++t)
        save_cloud(rr.refined[t - 1], frame_path(out_dir, "refined", int(t)));
    save_loss_trace_csv(rr.trace, (out_dir / "loss_trace.csv").string());

    double initial_loss = 0.0, final_loss = 0.0;
    for (const LossRecord& r : rr.trace) {
        if (r.step == 0) initial_loss += r.l_total;
        if (r.step == rr.steps_run - 1) final_loss += r.l_total;
    }
    report["refine"] = {{"steps", rr.steps_run},
                        {"pairs", rr.schedule.size()},
                        {"all_masks_empty", rr.all_masks_empty},
                        {"initial_loss", initial_loss},
                        {"final_loss", final_loss}};
    if (rr.all_masks_empty)
        warn("refine", "all artifact masks empty at entry; colors left unchanged");

    if (opts.emit_maps && !rr.refined.empty() && !session.cameras.empty()) {
        const Camera& cam0 = session.cameras.front();
        for (size_t t = 2; t <= rr.refined.size(); ++t) {
            std::vector<double> xi =
                color_uncertainty(rr.refined[0], rr.refined[t - 1], cam0);
            RenderedMaps um = render_uncertainty(xi, rr.refined[t - 1], cam0);
            save_image_g4di(um.uncertainty,
                            frame_path(out_dir, "uncertainty", int(t), ".g4di"));
            Image mask = artifact_mask(um.uncertainty, um.alpha_acc, params.epsilon);
            save_image_g4di(mask, frame_path(out_dir, "mask", int(t), ".g4di"));
        }
    }
    report["timings_ms"]["refine"] = ms_since(t_start);
    if (opts.stop_after == "refine") return finish();

    // ---- render ----------------------------------------------------------
    log_line("stage render");
    t_start = Clock::now();
    std::vector<Vec3> positions_1(rr.refined[0].size());
    for (size_t i = 0; i < positions_1.size(); ++i)
        positions_1[i] = rr.refined[0].gaussians[i].mu;
    for (size_t t = 1; t <= rr.refined.size(); ++t) {
        for (size_t v = 0; v < session.cameras.size(); ++v) {
            const Camera& cam = session.cameras[v];
            RenderedMaps maps = render_color(rr.refined[t - 1], cam);
            std::string base = "render_f" + zero_pad(int(t), 3) + "_v" + zero_pad(int(v), 2);
            save_png(maps.color, (out_dir / (base + ".png")).string());
            if (opts.emit_maps) {
                save_image_g4di(maps.color, (out_dir / (base + ".g4di")).string());
                RenderedMaps fl = render_flow(rr.refined[t - 1], positions_1, cam);
                save_image_g4di(fl.flow, (out_dir / ("flow_f" + zero_pad(int(t), 3) +
                                                     "_v" + zero_pad(int(v), 2) + ".g4di"))
                                             .string());
            }
        }
    }
    report["timings_ms"]["render"] = ms_since(t_start);
    return finish();
}

} // namespace g4d
