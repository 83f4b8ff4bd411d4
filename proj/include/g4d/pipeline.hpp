#pragma once

#include <string>

#include "g4d/types.hpp"

namespace g4d {

struct RunOptions {
    std::string out_dir = ".";
    std::string stop_after;  // empty for a full run, else the last stage name
    bool emit_maps = false;  // write uncertainty/mask/flow float images
};

struct RunSummary {
    int exit_code = 0;  // 0 ok; 2 = solver not converged, results still written
    std::string report_path;
};

// Executes anchors -> match -> propagate -> refine -> render, writing all
// artifacts plus report.json under opts.out_dir. Identical session + seed
// gives byte-identical cloud/image artifacts (report timings excepted).
RunSummary run_pipeline(const EditSession& session, const RunOptions& opts);

} // namespace g4d
