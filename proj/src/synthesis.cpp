#include "degforge/synthesis.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "degforge/png_io.hpp"

namespace degforge::synthesis {

namespace fs = std::filesystem;

std::vector<GenerationPlan> plan(
    const std::vector<std::pair<std::string, std::optional<DegradationKind>>>& corpus) {
    std::vector<GenerationPlan> out;
    out.reserve(corpus.size());
    for (const auto& [path, source] : corpus) {
        GenerationPlan p;
        p.clean_path = path;
        p.source_degradation = source;
        for (DegradationKind k : toyworld::kAllDegradations)
            if (!source || k != *source) p.targets.insert(k);
        out.push_back(std::move(p));
    }
    return out;
}

FilterRule default_filter_rule(DegradationKind deg) {
    switch (deg) {
        case DegradationKind::haze: return {deg, 0.3};
        case DegradationKind::rain: return {deg, 0.23};
        case DegradationKind::snow: return {deg, 0.45};
        case DegradationKind::motion_blur: return {deg, 0.07};
        case DegradationKind::raindrop: return {deg, 0.1};
        case DegradationKind::low_light: return {deg, std::nullopt};
    }
    throw std::logic_error("unknown DegradationKind");
}

FilterVerdict filter_sample(const Image& x_gen, const Image& clean, const FilterRule& rule) {
    require_same_shape(x_gen, clean, "filter_sample");
    auto stats = degstats::stats_of_map(degstats::degradation_map(x_gen, clean));
    bool kept = !rule.threshold || stats.mu <= *rule.threshold;
    return {kept, stats.mu};
}

namespace {

struct Job {
    size_t plan_idx;
    DegradationKind target;
    const GenerationPlan* plan;
};

manifest::ManifestRecord run_job(const Job& job,
                                 const std::map<DegradationKind, degstats::StatsHistogram>& hists,
                                 diffusion::Generator& gen, const scm::Scm* scm_model,
                                 const SynthesisConfig& cfg) {
    const DegradationKind deg = job.target;
    uint64_t seed = Rng::mix(cfg.master_seed, job.plan_idx, static_cast<uint64_t>(deg) + 1);
    Rng rng(seed);

    auto hit = hists.find(deg);
    if (hit == hists.end())
        throw std::runtime_error("synthesize: no histogram for " + toyworld::to_string(deg));
    const auto& hist = hit->second;

    Image clean = read_png(job.plan->clean_path);
    auto ms = degstats::sample_mu_sigma(hist, rng);

    Image x_gen = gen.sample(clean, deg, ms.mu_gen, ms.sigma_gen, cfg.caption, hist.range_mu,
                             hist.range_sigma, cfg.guidance, rng);

    manifest::ManifestRecord rec;
    rec.degradation = deg;
    rec.mu_gen = ms.mu_gen;
    rec.sigma_gen = ms.sigma_gen;
    rec.seed = seed;
    rec.generator_checkpoint_id = gen.checkpoint_id;

    fs::path deg_dir = fs::path(cfg.out_dir) / toyworld::to_string(deg);
    fs::create_directories(deg_dir);
    std::string idx = std::to_string(job.plan_idx);

    auto route = scm::route_ground_truth(deg);
    Image final_img = x_gen;
    if (route.mode == scm::GtMode::scm_corrected && scm_model) {
        final_img = scm_model->apply(x_gen, clean);
        rec.gt_mode = "scm_corrected";
        rec.clean_path = job.plan->clean_path;
    } else {
        // vae_round_trip, also the fallback when no SCM section is present
        rec.gt_mode = "vae_round_trip";
        fs::path gt_dir = fs::path(cfg.out_dir) / "gt" / toyworld::to_string(deg);
        fs::create_directories(gt_dir);
        fs::path gt_path = gt_dir / (idx + ".png");
        write_png(gt_path.string(), gen.codec.round_trip_clean(clean));
        rec.clean_path = gt_path.string();
    }

    fs::path gen_path = deg_dir / (idx + ".png");
    write_png(gen_path.string(), final_img);
    rec.gen_path = gen_path.string();

    // Filter against the original clean image; stats recomputed from the
    // quantized PNG so a refilter over emitted files agrees exactly.
    Image reread = read_png(gen_path.string());
    FilterRule rule = default_filter_rule(deg);
    auto ov = cfg.threshold_overrides.find(deg);
    if (ov != cfg.threshold_overrides.end()) rule.threshold = ov->second;
    auto verdict = filter_sample(reread, clean, rule);
    rec.kept = verdict.kept;
    rec.mu_realized = verdict.mu_realized;
    rec.sigma_realized = degstats::stats_of_map(degstats::degradation_map(reread, clean)).sigma;
    return rec;
}

}  // namespace

std::vector<manifest::ManifestRecord> synthesize(
    const std::vector<GenerationPlan>& plans,
    const std::map<DegradationKind, degstats::StatsHistogram>& histograms,
    diffusion::Generator& gen, const scm::Scm* scm_model, const SynthesisConfig& cfg) {
    // Abort before any generation if the output directory is unusable.
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw std::runtime_error("synthesize: cannot create out_dir " + cfg.out_dir);
    {
        fs::path probe = fs::path(cfg.out_dir) / ".write_probe";
        std::ofstream test(probe);
        if (!test) throw std::runtime_error("synthesize: out_dir not writable: " + cfg.out_dir);
        test.close();
        fs::remove(probe);
    }

    // Stable job order: (plan index, enum order of targets).
    std::vector<Job> jobs;
    for (size_t i = 0; i < plans.size(); ++i)
        for (DegradationKind k : toyworld::kAllDegradations)
            if (plans[i].targets.count(k)) jobs.push_back({i, k, &plans[i]});

    // Resume: reuse rows from a partial manifest keyed by (plan idx, target).
    fs::path manifest_path = fs::path(cfg.out_dir) / "manifest.jsonl";
    std::map<std::pair<size_t, DegradationKind>, manifest::ManifestRecord> done;
    if (fs::exists(manifest_path)) {
        for (auto& rec : manifest::read_manifest(manifest_path.string())) {
            fs::path p(rec.gen_path);
            size_t idx = std::stoul(p.stem().string());
            if (fs::exists(rec.gen_path)) done[{idx, rec.degradation}] = rec;
        }
    }

    std::vector<manifest::ManifestRecord> records(jobs.size());
    std::vector<char> pending(jobs.size(), 1);
    for (size_t j = 0; j < jobs.size(); ++j) {
        auto it = done.find({jobs[j].plan_idx, jobs[j].target});
        if (it != done.end()) {
            records[j] = it->second;
            pending[j] = 0;
        }
    }

    auto worker_loop = [&](std::atomic<size_t>& next) {
        for (size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
            if (!pending[j]) continue;
            records[j] = run_job(jobs[j], histograms, gen, scm_model, cfg);
        }
    };
    std::atomic<size_t> next{0};
    int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        worker_loop(next);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back([&] { worker_loop(next); });
        for (auto& th : pool) th.join();
    }

    manifest::write_manifest(manifest_path.string(), records);
    return records;
}

}  // namespace degforge::synthesis
