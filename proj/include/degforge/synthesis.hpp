#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "degforge/degstats.hpp"
#include "degforge/diffusion.hpp"
#include "degforge/manifest.hpp"
#include "degforge/scm.hpp"

namespace degforge::synthesis {

using toyworld::DegradationKind;

struct GenerationPlan {
    std::string clean_path;
    std::optional<DegradationKind> source_degradation;
    std::set<DegradationKind> targets;  // complement of the source
};

// One plan per clean image; targets = all six kinds minus the source.
std::vector<GenerationPlan> plan(
    const std::vector<std::pair<std::string, std::optional<DegradationKind>>>& corpus);

struct FilterRule {
    DegradationKind degradation;
    std::optional<double> threshold;
};

// Empirical mean-degradation thresholds; low_light ships without one.
FilterRule default_filter_rule(DegradationKind deg);

struct FilterVerdict {
    bool kept;
    double mu_realized;
};

// kept iff no threshold or mu(|x_gen - clean|) <= threshold.
FilterVerdict filter_sample(const Image& x_gen, const Image& clean, const FilterRule& rule);

struct SynthesisConfig {
    std::string out_dir;
    uint64_t master_seed = 0;
    diffusion::GuidanceConfig guidance;
    std::string caption = "a toy scene";
    std::map<DegradationKind, double> threshold_overrides;
    int workers = 1;
};

// Generate every (plan, target), sample (mu_gen, sigma_gen) from the target's
// histogram, run diffusion sampling, route the ground truth, filter, and write
// images + manifest (discarded rows retained with kept=false). Deterministic
// given master_seed; partially completed runs are resumed from the manifest.
std::vector<manifest::ManifestRecord> synthesize(
    const std::vector<GenerationPlan>& plans,
    const std::map<DegradationKind, degstats::StatsHistogram>& histograms,
    diffusion::Generator& gen, const scm::Scm* scm_model, const SynthesisConfig& cfg);

}  // namespace degforge::synthesis
