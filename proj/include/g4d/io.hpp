#pragma once

#include <string>

#include "g4d/anchors.hpp"
#include "g4d/image.hpp"
#include "g4d/types.hpp"
#include "g4d/uot.hpp"

namespace g4d {

// Binary cloud format, magic "G4DC" (see README for the layout).
GaussianCloud load_cloud(const std::string& path);
void save_cloud(const GaussianCloud& cloud, const std::string& path);

// Binary tabulated deformation format, magic "G4DF".
DeformationField load_deformation(const std::string& path);
void save_deformation(const DeformationField& field, const GaussianCloud& cloud,
                      const std::string& path);

// Lossless float image format, magic "G4DI".
Image load_image_g4di(const std::string& path);
void save_image_g4di(const Image& img, const std::string& path);

// 8-bit PNG; 1 channel emits grayscale, 3 channels RGB. Values are
// clamped to [0,1] and quantized with round-half-up.
void save_png(const Image& img, const std::string& path);

// JSON serializations for inspection artifacts.
void save_anchor_set(const AnchorSet& anchors, const std::string& path);
AnchorSet load_anchor_set(const std::string& path);
void save_correspondence(const CorrespondenceMap& corr, const TransportPlan& plan,
                         const std::string& path);
CorrespondenceMap load_correspondence(const std::string& path);

// Session config: one JSON document with cloud/deformation paths (relative
// to the config file), cameras, and the hyperparameter block.
EditSession load_session(const std::string& config_path);
PipelineParams params_from_json_file(const std::string& path);
void save_session_config(const EditSession& session, const std::string& source_rel,
                         const std::string& edited_rel, const std::string& deform_rel,
                         const std::string& path);

} // namespace g4d
