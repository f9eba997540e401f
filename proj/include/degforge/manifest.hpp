#pragma once

#include <optional>
#include <string>
#include <vector>

#include "degforge/toyworld.hpp"

namespace degforge::manifest {

inline constexpr int kSchemaVersion = 1;

// One line of a dataset manifest (JSON Lines, schema_version field first).
// gt_mode records which ground-truth route the record used:
//   clean          — original clean image (existing datasets)
//   scm_corrected  — SCM-corrected generation (haze/motion_blur/raindrop)
//   vae_round_trip — clean image passed through the VAE (rain/snow/low_light)
struct ManifestRecord {
    std::string clean_path;  // ground-truth counterpart used for training
    std::string gen_path;    // degraded image
    toyworld::DegradationKind degradation = toyworld::DegradationKind::haze;
    std::optional<double> mu_gen;     // absent for existing (non-generated) data
    std::optional<double> sigma_gen;
    double mu_realized = 0.0;
    double sigma_realized = 0.0;
    bool kept = true;
    uint64_t seed = 0;
    std::string generator_checkpoint_id;
    std::string gt_mode = "clean";
    std::optional<std::string> source;  // set by mix_datasets: existing | generated

    std::string to_json_line() const;
    static ManifestRecord from_json_line(const std::string& line);
};

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

}  // namespace degforge::manifest
