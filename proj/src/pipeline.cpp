#include "degforge/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "degforge/checkpoint.hpp"
#include "degforge/degstats.hpp"
#include "degforge/diffusion.hpp"
#include "degforge/evalkit.hpp"
#include "degforge/manifest.hpp"
#include "degforge/png_io.hpp"
#include "degforge/restoration.hpp"
#include "degforge/scm.hpp"
#include "degforge/synthesis.hpp"
#include "degforge/toyworld.hpp"

namespace degforge::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using toyworld::DegradationKind;

namespace {

// ---------------------------------------------------------------- config ---

const std::map<std::string, std::set<std::string>> kSectionKeys = {
    {"toyworld",
     {"count", "heldout", "height", "width", "degradations", "severity_min", "severity_max"}},
    {"stats", {"manifest", "out_file"}},
    {"train_gen",
     {"manifest", "histograms", "ckpt_dir", "codec", "codec_steps", "codec_lr", "T", "schedule",
      "steps", "batch", "lr", "cond_dropout", "base_channels", "ctx_dim", "attn_dim", "temb_dim",
      "caption"}},
    {"train_scm", {"manifest", "histograms", "ckpt_dir", "steps", "lr", "caption"}},
    {"synth",
     {"ckpt_dir", "histograms", "manifest", "out_dir", "caption", "steps", "s_img", "s_text",
      "targets", "thresholds"}},
    {"mix", {"existing", "generated", "out_dir"}},
    {"train_restore",
     {"manifest", "ckpt_dir", "epochs", "batch", "lr", "warmup_epochs", "weight_decay",
      "decoder_kernel", "window_size", "attn_dim", "curve_csv"}},
    {"eval", {"datasets", "restorer", "out_dir"}},
};

const std::set<std::string> kTopScalarKeys = {"seed",  "workers",   "out",
                                              "cache", "overwrite", "dry_run"};

DegradationKind parse_degradation(const std::string& name, const std::string& key_path) {
    try {
        return toyworld::degradation_from_string(name);
    } catch (const std::exception&) {
        throw ConfigError(key_path + ": unknown degradation '" + name + "'");
    }
}

void validate_schema(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (kTopScalarKeys.count(key)) continue;
        auto sec = kSectionKeys.find(key);
        if (sec == kSectionKeys.end()) throw ConfigError("unknown key: " + key);
        if (!value.is_object()) throw ConfigError(key + ": must be an object");
        for (const auto& [k2, v2] : value.items()) {
            if (!sec->second.count(k2)) throw ConfigError("unknown key: " + key + "." + k2);
            if (key == "toyworld" && k2 == "degradations") {
                if (!v2.is_array()) throw ConfigError("toyworld.degradations: must be an array");
                for (const auto& d : v2)
                    parse_degradation(d.get<std::string>(), "toyworld.degradations");
            }
            if (key == "synth" && k2 == "targets") {
                if (!v2.is_array()) throw ConfigError("synth.targets: must be an array");
                for (const auto& d : v2) parse_degradation(d.get<std::string>(), "synth.targets");
            }
            if (key == "synth" && k2 == "thresholds") {
                if (!v2.is_object()) throw ConfigError("synth.thresholds: must be an object");
                for (const auto& [dname, tv] : v2.items()) {
                    parse_degradation(dname, "synth.thresholds");
                    if (!tv.is_number())
                        throw ConfigError("synth.thresholds." + dname + ": must be a number");
                }
            }
            if (key == "eval" && k2 == "datasets") {
                if (!v2.is_array()) throw ConfigError("eval.datasets: must be an array");
                for (const auto& ds : v2) {
                    if (!ds.is_object()) throw ConfigError("eval.datasets[]: must be objects");
                    for (const auto& [dk, dv] : ds.items())
                        if (dk != "name" && dk != "split" && dk != "manifest")
                            throw ConfigError("unknown key: eval.datasets[]." + dk);
                    for (const char* req : {"name", "split", "manifest"})
                        if (!ds.contains(req))
                            throw ConfigError(std::string("eval.datasets[].") + req +
                                              ": required");
                    std::string split = ds.at("split").get<std::string>();
                    if (split != "within" && split != "ood")
                        throw ConfigError("eval.datasets[].split: must be 'within' or 'ood'");
                }
            }
        }
    }
}

template <class T>
T jget(const json& sec, const std::string& sec_name, const std::string& key, T def) {
    if (!sec.contains(key)) return def;
    try {
        return sec.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(sec_name + "." + key + ": " + e.what());
    }
}

std::string out_path(const RunConfig& cfg, const std::string& rel) {
    return (fs::path(cfg.out) / rel).string();
}

// Default-clobber guard: commands refuse to overwrite their primary output.
void guard_output(const RunConfig& cfg, const std::string& path) {
    if (!cfg.overwrite && fs::exists(path))
        throw PreconditionError("output exists: " + path + " (pass --overwrite to replace)");
}

void ensure_parent_dir(const std::string& file) {
    fs::path parent = fs::path(file).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

std::string pad4(size_t idx) {
    std::ostringstream s;
    s << std::setw(4) << std::setfill('0') << idx;
    return s.str();
}

std::string hex_id(uint64_t x) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << x;
    return s.str();
}

// ------------------------------------------------------------- artifacts ---

std::map<DegradationKind, degstats::StatsHistogram> load_histograms(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("histogram file not found: " + path);
    json j = json::parse(in);
    std::map<DegradationKind, degstats::StatsHistogram> out;
    for (const auto& [name, value] : j.items())
        out[toyworld::degradation_from_string(name)] =
            degstats::StatsHistogram::from_json(value.dump());
    return out;
}

struct GeneratorMeta {
    std::string codec_mode = "learned";
    int T = 200;
    std::string schedule = "linear";
    int base_channels = 32, ctx_dim = 32, attn_dim = 32, temb_dim = 32;
    std::string checkpoint_id, caption;
};

diffusion::ScheduleKind parse_schedule(const std::string& s, const std::string& key_path) {
    if (s == "linear") return diffusion::ScheduleKind::linear;
    if (s == "cosine") return diffusion::ScheduleKind::cosine;
    throw ConfigError(key_path + ": must be 'linear' or 'cosine'");
}

void save_generator_meta(const std::string& dir, const GeneratorMeta& m) {
    json meta = checkpoint::load_meta(dir);
    meta["generator"] = {{"codec_mode", m.codec_mode},
                         {"T", m.T},
                         {"schedule", m.schedule},
                         {"base_channels", m.base_channels},
                         {"ctx_dim", m.ctx_dim},
                         {"attn_dim", m.attn_dim},
                         {"temb_dim", m.temb_dim},
                         {"checkpoint_id", m.checkpoint_id},
                         {"caption", m.caption}};
    checkpoint::save_meta(dir, meta);
}

diffusion::Generator load_generator(const std::string& dir) {
    if (!checkpoint::has_section(dir, "denoiser"))
        throw PreconditionError("generator checkpoint required: " + dir);
    json meta = checkpoint::load_meta(dir);
    if (!meta.contains("generator"))
        throw PreconditionError("checkpoint lacks generator metadata: " + dir);
    const json& g = meta["generator"];
    std::string codec_mode = g.at("codec_mode").get<std::string>();
    latentcodec::Codec codec =
        codec_mode == "identity"
            ? latentcodec::Codec::identity()
            : latentcodec::Codec(latentcodec::CodecConfig{latentcodec::CodecMode::learned, 4, 4});
    diffusion::DenoiserConfig dcfg;
    dcfg.base_channels = g.at("base_channels").get<int>();
    dcfg.ctx_dim = g.at("ctx_dim").get<int>();
    dcfg.attn_dim = g.at("attn_dim").get<int>();
    dcfg.temb_dim = g.at("temb_dim").get<int>();
    diffusion::Generator gen(std::move(codec), dcfg, g.at("T").get<int>(),
                             parse_schedule(g.at("schedule").get<std::string>(), "meta.schedule"),
                             1);
    gen.load(dir);
    gen.checkpoint_id = g.at("checkpoint_id").get<std::string>();
    return gen;
}

std::string meta_caption(const std::string& ckpt_dir, const std::string& fallback) {
    json meta = checkpoint::load_meta(ckpt_dir);
    if (meta.contains("generator") && meta["generator"].contains("caption"))
        return meta["generator"]["caption"].get<std::string>();
    return fallback;
}

std::vector<manifest::ManifestRecord> read_manifest_checked(const std::string& path) {
    if (!fs::exists(path)) throw PreconditionError("manifest not found: " + path);
    return manifest::read_manifest(path);
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const Overrides& ov) {
    validate_schema(j);
    RunConfig cfg;
    cfg.raw = j;
    cfg.seed = jget<uint64_t>(j, "config", "seed", 1);
    cfg.workers = jget<int>(j, "config", "workers", 1);
    cfg.out = jget<std::string>(j, "config", "out", "run");
    cfg.cache = jget<std::string>(j, "config", "cache", "");
    cfg.overwrite = jget<bool>(j, "config", "overwrite", false);
    cfg.dry_run = jget<bool>(j, "config", "dry_run", false);
    if (cfg.cache.empty())
        if (const char* env = std::getenv("DEGFORGE_CACHE")) cfg.cache = env;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.workers) cfg.workers = *ov.workers;
    if (ov.out) cfg.out = *ov.out;
    if (ov.dry_run) cfg.dry_run = true;
    if (ov.overwrite) cfg.overwrite = true;
    if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");
    return cfg;
}

RunConfig RunConfig::load(const std::string& path, const Overrides& ov) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j, ov);
}

json RunConfig::section(const std::string& name) const {
    if (raw.contains(name)) return raw.at(name);
    return json::object();
}

// ---------------------------------------------------------------- cmds -----

void cmd_toyworld(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("toyworld");
    int count = jget<int>(s, "toyworld", "count", 8);
    int heldout = jget<int>(s, "toyworld", "heldout", 0);
    int h = jget<int>(s, "toyworld", "height", 32);
    int w = jget<int>(s, "toyworld", "width", 32);
    double sev_lo = jget<double>(s, "toyworld", "severity_min", 0.2);
    double sev_hi = jget<double>(s, "toyworld", "severity_max", 0.8);
    std::vector<DegradationKind> degs;
    if (s.contains("degradations"))
        for (const auto& d : s.at("degradations"))
            degs.push_back(parse_degradation(d.get<std::string>(), "toyworld.degradations"));
    else
        degs.assign(toyworld::kAllDegradations.begin(), toyworld::kAllDegradations.end());
    if (count < 1) throw ConfigError("toyworld.count: must be >= 1");

    std::string dir = out_path(cfg, "toyworld");
    std::string train_manifest = dir + "/manifest.jsonl";
    std::string heldout_manifest = dir + "/heldout.jsonl";

    log << "toyworld: " << count << "+" << heldout << " scenes " << h << "x" << w << ", "
        << degs.size() << " degradations, seed " << cfg.seed << " -> " << dir << "\n";
    if (cfg.dry_run) return;
    guard_output(cfg, train_manifest);

    fs::create_directories(fs::path(dir) / "clean");
    for (DegradationKind k : degs) fs::create_directories(fs::path(dir) / toyworld::to_string(k));

    std::vector<manifest::ManifestRecord> train_rows, heldout_rows;
    for (int idx = 0; idx < count + heldout; ++idx) {
        auto scene = toyworld::make_scene(Rng::mix(cfg.seed, idx, 0x70), h, w);
        std::string clean_path = dir + "/clean/" + pad4(idx) + ".png";
        write_png(clean_path, scene.pixels);
        Image clean = read_png(clean_path);  // stats on the quantized pixels
        for (DegradationKind k : degs) {
            uint64_t item_seed = Rng::mix(cfg.seed, idx, static_cast<uint64_t>(k) + 0x100);
            Rng rng(item_seed);
            double sev = rng.uniform(sev_lo, sev_hi);
            Image degraded = toyworld::apply_degradation(scene, k, sev, item_seed);
            std::string gen_path =
                dir + "/" + toyworld::to_string(k) + "/" + pad4(idx) + ".png";
            write_png(gen_path, degraded);
            auto stats =
                degstats::stats_of_map(degstats::degradation_map(read_png(gen_path), clean));
            manifest::ManifestRecord rec;
            rec.clean_path = clean_path;
            rec.gen_path = gen_path;
            rec.degradation = k;
            rec.mu_realized = stats.mu;
            rec.sigma_realized = stats.sigma;
            rec.kept = true;
            rec.seed = item_seed;
            rec.gt_mode = "clean";
            (idx < count ? train_rows : heldout_rows).push_back(std::move(rec));
        }
    }
    manifest::write_manifest(train_manifest, train_rows);
    if (heldout > 0) manifest::write_manifest(heldout_manifest, heldout_rows);
    log << "toyworld: wrote " << train_rows.size() << " train + " << heldout_rows.size()
        << " heldout pairs\n";
}

void cmd_stats(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("stats");
    std::string manifest_path =
        jget<std::string>(s, "stats", "manifest", out_path(cfg, "toyworld/manifest.jsonl"));
    std::string out_file =
        jget<std::string>(s, "stats", "out_file", out_path(cfg, "histograms.json"));

    log << "stats: " << manifest_path << " -> " << out_file << "\n";
    if (cfg.dry_run) return;
    guard_output(cfg, out_file);

    auto rows = read_manifest_checked(manifest_path);
    std::map<DegradationKind, std::vector<degstats::DegradationStats>> grouped;
    for (const auto& r : rows)
        grouped[r.degradation].push_back({r.mu_realized, r.sigma_realized});

    json out = json::object();
    for (DegradationKind k : toyworld::kAllDegradations) {
        auto it = grouped.find(k);
        if (it == grouped.end()) continue;
        auto hist = degstats::build_histogram(k, it->second);
        hist.validate();
        out[toyworld::to_string(k)] = json::parse(hist.to_json());
        log << "stats: " << toyworld::to_string(k) << " from " << it->second.size()
            << " pairs\n";
    }
    ensure_parent_dir(out_file);
    std::ofstream f(out_file);
    f << out.dump(2) << "\n";
}

void cmd_train_gen(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("train_gen");
    std::string manifest_path =
        jget<std::string>(s, "train_gen", "manifest", out_path(cfg, "toyworld/manifest.jsonl"));
    std::string hist_path =
        jget<std::string>(s, "train_gen", "histograms", out_path(cfg, "histograms.json"));
    std::string ckpt_dir = jget<std::string>(s, "train_gen", "ckpt_dir", out_path(cfg, "gen_ckpt"));
    std::string codec_mode = jget<std::string>(s, "train_gen", "codec", "learned");
    if (codec_mode != "learned" && codec_mode != "identity")
        throw ConfigError("train_gen.codec: must be 'learned' or 'identity'");
    int codec_steps = jget<int>(s, "train_gen", "codec_steps", 1500);
    double codec_lr = jget<double>(s, "train_gen", "codec_lr", 1e-3);
    GeneratorMeta meta;
    meta.codec_mode = codec_mode;
    meta.T = jget<int>(s, "train_gen", "T", 200);
    meta.schedule = jget<std::string>(s, "train_gen", "schedule", "linear");
    parse_schedule(meta.schedule, "train_gen.schedule");
    meta.base_channels = jget<int>(s, "train_gen", "base_channels", 32);
    meta.ctx_dim = jget<int>(s, "train_gen", "ctx_dim", 32);
    meta.attn_dim = jget<int>(s, "train_gen", "attn_dim", 32);
    meta.temb_dim = jget<int>(s, "train_gen", "temb_dim", 32);
    meta.caption = jget<std::string>(s, "train_gen", "caption", "a toy scene");
    diffusion::GenTrainConfig tcfg;
    tcfg.steps = jget<int>(s, "train_gen", "steps", 2000);
    tcfg.batch = jget<int>(s, "train_gen", "batch", 4);
    tcfg.lr = jget<double>(s, "train_gen", "lr", 2e-3);
    tcfg.cond_dropout = jget<double>(s, "train_gen", "cond_dropout", 0.05);

    log << "train_gen: " << tcfg.steps << " steps (codec " << codec_mode << ", T=" << meta.T
        << ", " << meta.schedule << ") -> " << ckpt_dir << "\n";
    if (cfg.dry_run) return;
    guard_output(cfg, (fs::path(ckpt_dir) / "denoiser.bin").string());

    auto rows = read_manifest_checked(manifest_path);
    auto hists = load_histograms(hist_path);

    latentcodec::Codec codec =
        codec_mode == "identity"
            ? latentcodec::Codec::identity()
            : latentcodec::Codec(latentcodec::CodecConfig{latentcodec::CodecMode::learned, 4, 4},
                                 cfg.seed);
    if (codec_mode == "learned") {
        // Reuse a cached codec ($DEGFORGE_CACHE) trained on the same inputs.
        std::string cache_key =
            hex_id(Rng::mix(cfg.seed, static_cast<uint64_t>(codec_steps), rows.size()));
        std::string cache_dir =
            cfg.cache.empty() ? "" : (fs::path(cfg.cache) / ("codec-" + cache_key)).string();
        if (!cache_dir.empty() && checkpoint::has_section(cache_dir, "codec")) {
            codec.load(cache_dir);
            log << "train_gen: codec loaded from cache " << cache_dir << "\n";
        } else {
            std::vector<Image> imgs;
            for (const auto& r : rows) {
                imgs.push_back(read_png(r.clean_path));
                imgs.push_back(read_png(r.gen_path));
            }
            Rng crng(Rng::mix(cfg.seed, 0xc0dec, 1));
            auto res = latentcodec::train_codec(codec, imgs, {}, codec_steps, codec_lr, crng);
            log << "train_gen: codec trained, final loss " << res.loss_curve.back() << "\n";
            if (!cache_dir.empty()) {
                codec.save(cache_dir);
                log << "train_gen: codec cached at " << cache_dir << "\n";
            }
        }
    }

    diffusion::DenoiserConfig dcfg;
    dcfg.base_channels = meta.base_channels;
    dcfg.ctx_dim = meta.ctx_dim;
    dcfg.attn_dim = meta.attn_dim;
    dcfg.temb_dim = meta.temb_dim;
    diffusion::Generator gen(std::move(codec), dcfg, meta.T,
                             parse_schedule(meta.schedule, "train_gen.schedule"), cfg.seed);

    std::vector<diffusion::TrainExample> examples;
    for (const auto& r : rows) {
        if (!r.kept) continue;
        auto hit = hists.find(r.degradation);
        if (hit == hists.end())
            throw PreconditionError("no histogram for " + toyworld::to_string(r.degradation));
        examples.push_back(diffusion::make_train_example(
            gen, read_png(r.gen_path), read_png(r.clean_path), r.degradation, meta.caption,
            hit->second.range_mu, hit->second.range_sigma));
    }
    if (examples.empty()) throw PreconditionError("train_gen: no kept training rows");

    Rng rng(Rng::mix(cfg.seed, 0x9e4, 2));
    auto curve = diffusion::train_generator(gen, examples, tcfg, rng);
    log << "train_gen: loss " << curve.front() << " -> " << curve.back() << "\n";

    meta.checkpoint_id =
        "gen-" + hex_id(Rng::mix(cfg.seed, static_cast<uint64_t>(tcfg.steps), meta.T));
    gen.checkpoint_id = meta.checkpoint_id;
    gen.save(ckpt_dir);
    save_generator_meta(ckpt_dir, meta);
}

void cmd_train_scm(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("train_scm");
    std::string ckpt_dir = jget<std::string>(s, "train_scm", "ckpt_dir", out_path(cfg, "gen_ckpt"));
    std::string manifest_path =
        jget<std::string>(s, "train_scm", "manifest", out_path(cfg, "toyworld/manifest.jsonl"));
    std::string hist_path =
        jget<std::string>(s, "train_scm", "histograms", out_path(cfg, "histograms.json"));
    scm::ScmTrainConfig tcfg;
    tcfg.steps = jget<int>(s, "train_scm", "steps", 400);
    tcfg.lr = jget<double>(s, "train_scm", "lr", 1e-3);

    log << "train_scm: " << tcfg.steps << " steps on " << ckpt_dir << "\n";
    if (cfg.dry_run) return;
    if (!checkpoint::has_section(ckpt_dir, "denoiser"))
        throw PreconditionError("generator checkpoint required: " + ckpt_dir);
    guard_output(cfg, (fs::path(ckpt_dir) / "scm.bin").string());

    diffusion::Generator gen = load_generator(ckpt_dir);
    std::string caption = meta_caption(ckpt_dir, "a toy scene");
    caption = jget<std::string>(s, "train_scm", "caption", caption);
    std::string frozen_before = checkpoint::section_bytes(ckpt_dir, "denoiser");

    auto rows = read_manifest_checked(manifest_path);
    auto hists = load_histograms(hist_path);
    std::vector<scm::ScmPair> pairs;
    for (const auto& r : rows) {
        if (!r.kept) continue;
        if (scm::route_ground_truth(r.degradation).mode != scm::GtMode::scm_corrected) continue;
        auto hit = hists.find(r.degradation);
        if (hit == hists.end())
            throw PreconditionError("no histogram for " + toyworld::to_string(r.degradation));
        scm::ScmPair p;
        p.degraded = read_png(r.gen_path);
        p.clean = read_png(r.clean_path);
        p.stats = conditioning::make_stats_conditioning(
            degstats::encode_onehot(r.mu_realized, hit->second.range_mu, false),
            degstats::encode_onehot(r.sigma_realized, hit->second.range_sigma, false));
        p.text = conditioning::stub_text_embed(caption, r.degradation);
        pairs.push_back(std::move(p));
    }
    if (pairs.empty())
        throw PreconditionError("train_scm: no SCM-routed training pairs in " + manifest_path);

    scm::Scm model(Rng::mix(cfg.seed, 0x5c3, 3));
    Rng rng(Rng::mix(cfg.seed, 0x5c3, 4));
    auto curve = scm::train_scm(model, gen, pairs, tcfg, rng);
    log << "train_scm: loss " << curve.front() << " -> " << curve.back() << "\n";

    gen.save(ckpt_dir);  // rewrite, then prove the generator was untouched
    if (checkpoint::section_bytes(ckpt_dir, "denoiser") != frozen_before)
        throw std::runtime_error("train_scm: generator weights changed during SCM training");
    model.save(ckpt_dir);
}

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("synth");
    std::string ckpt_dir = jget<std::string>(s, "synth", "ckpt_dir", out_path(cfg, "gen_ckpt"));
    std::string hist_path =
        jget<std::string>(s, "synth", "histograms", out_path(cfg, "histograms.json"));
    std::string manifest_path =
        jget<std::string>(s, "synth", "manifest", out_path(cfg, "toyworld/manifest.jsonl"));
    synthesis::SynthesisConfig scfg;
    scfg.out_dir = jget<std::string>(s, "synth", "out_dir", out_path(cfg, "synth"));
    scfg.master_seed = cfg.seed;
    scfg.workers = cfg.workers;
    scfg.guidance.steps = jget<int>(s, "synth", "steps", 20);
    scfg.guidance.s_img = jget<double>(s, "synth", "s_img", 1.5);
    scfg.guidance.s_text = jget<double>(s, "synth", "s_text", 7.5);
    if (s.contains("thresholds"))
        for (const auto& [name, v] : s.at("thresholds").items())
            scfg.threshold_overrides[parse_degradation(name, "synth.thresholds")] =
                v.get<double>();

    auto rows_for_plan = [&]() {
        auto rows = read_manifest_checked(manifest_path);
        std::vector<std::pair<std::string, std::optional<DegradationKind>>> corpus;
        std::set<std::string> seen;
        for (const auto& r : rows)
            if (seen.insert(r.clean_path).second) corpus.emplace_back(r.clean_path, std::nullopt);
        auto plans = synthesis::plan(corpus);
        if (s.contains("targets")) {
            std::set<DegradationKind> wanted;
            for (const auto& d : s.at("targets"))
                wanted.insert(parse_degradation(d.get<std::string>(), "synth.targets"));
            for (auto& p : plans) {
                std::set<DegradationKind> kept;
                for (DegradationKind k : p.targets)
                    if (wanted.count(k)) kept.insert(k);
                p.targets = std::move(kept);
            }
        }
        return plans;
    };

    if (cfg.dry_run) {
        auto plans = rows_for_plan();
        size_t jobs = 0;
        for (const auto& p : plans) jobs += p.targets.size();
        log << "synth: " << plans.size() << " clean images, " << jobs << " jobs, seed "
            << cfg.seed << " -> " << scfg.out_dir << "\n";
        return;
    }
    guard_output(cfg, (fs::path(scfg.out_dir) / "manifest.jsonl").string());
    if (cfg.overwrite) fs::remove(fs::path(scfg.out_dir) / "manifest.jsonl");

    diffusion::Generator gen = load_generator(ckpt_dir);
    scfg.caption = jget<std::string>(s, "synth", "caption", meta_caption(ckpt_dir, "a toy scene"));
    std::optional<scm::Scm> scm_model;
    if (checkpoint::has_section(ckpt_dir, "scm")) {
        scm_model.emplace(1);
        scm_model->load(ckpt_dir);
    }
    auto hists = load_histograms(hist_path);
    auto plans = rows_for_plan();

    auto records = synthesis::synthesize(plans, hists, gen, scm_model ? &*scm_model : nullptr,
                                         scfg);
    size_t kept = 0;
    for (const auto& r : records) kept += r.kept ? 1 : 0;
    log << "synth: " << records.size() << " generated, " << kept << " kept, "
        << records.size() - kept << " filtered -> " << scfg.out_dir << "\n";
}

void cmd_mix(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("mix");
    std::string existing_path =
        jget<std::string>(s, "mix", "existing", out_path(cfg, "toyworld/manifest.jsonl"));
    std::string generated_path =
        jget<std::string>(s, "mix", "generated", out_path(cfg, "synth/manifest.jsonl"));
    std::string out_dir = jget<std::string>(s, "mix", "out_dir", out_path(cfg, "mix"));

    log << "mix: " << existing_path << " + " << generated_path << " -> " << out_dir << "\n";
    if (cfg.dry_run) return;
    guard_output(cfg, (fs::path(out_dir) / "gends.jsonl").string());

    auto existing = read_manifest_checked(existing_path);
    auto generated = read_manifest_checked(generated_path);
    auto merged = restoration::mix_datasets(existing, generated);

    for (auto& r : existing) r.source = "existing";
    for (auto& r : generated) r.source = "generated";
    fs::create_directories(out_dir);
    manifest::write_manifest((fs::path(out_dir) / "existing.jsonl").string(), existing);
    manifest::write_manifest((fs::path(out_dir) / "gendeg.jsonl").string(), generated);
    manifest::write_manifest((fs::path(out_dir) / "gends.jsonl").string(), merged);
    log << "mix: existing " << existing.size() << ", gendeg " << generated.size() << ", gends "
        << merged.size() << "\n";
}

void cmd_train_restore(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("train_restore");
    std::string manifest_path =
        jget<std::string>(s, "train_restore", "manifest", out_path(cfg, "mix/gends.jsonl"));
    std::string ckpt_dir =
        jget<std::string>(s, "train_restore", "ckpt_dir", out_path(cfg, "restorer_ckpt"));
    restoration::RestorerConfig rcfg;
    rcfg.decoder_kernel = jget<int>(s, "train_restore", "decoder_kernel", 3);
    rcfg.window_size = jget<int>(s, "train_restore", "window_size", 4);
    rcfg.attn_dim = jget<int>(s, "train_restore", "attn_dim", 16);
    restoration::TrainConfig tcfg;
    tcfg.epochs = jget<int>(s, "train_restore", "epochs", 50);
    tcfg.batch = jget<int>(s, "train_restore", "batch", 4);
    tcfg.lr = jget<double>(s, "train_restore", "lr", 2e-4);
    tcfg.warmup_epochs = jget<int>(s, "train_restore", "warmup_epochs", 1);
    tcfg.weight_decay = jget<double>(s, "train_restore", "weight_decay", 1e-4);
    std::string curve_csv = jget<std::string>(s, "train_restore", "curve_csv",
                                              (fs::path(ckpt_dir) / "loss_curve.csv").string());

    log << "train_restore: " << tcfg.epochs << " epochs on " << manifest_path << " -> "
        << ckpt_dir << "\n";
    if (cfg.dry_run) return;
    guard_output(cfg, (fs::path(ckpt_dir) / "restorer.bin").string());

    auto rows = read_manifest_checked(manifest_path);
    restoration::Restorer model(rcfg, Rng::mix(cfg.seed, 0x4e5, 5));
    Rng rng(Rng::mix(cfg.seed, 0x4e5, 6));
    auto stats = restoration::train_restorer(model, rows, tcfg, rng);
    log << "train_restore: epoch loss " << stats.epoch_loss.front() << " -> "
        << stats.epoch_loss.back() << "\n";

    model.save(ckpt_dir);
    ensure_parent_dir(curve_csv);
    std::ofstream f(curve_csv);
    f << stats.loss_curve_csv;
}

void cmd_eval(const RunConfig& cfg, std::ostream& log) {
    json s = cfg.section("eval");
    if (!s.contains("datasets")) throw ConfigError("eval.datasets: required");
    std::string out_dir = jget<std::string>(s, "eval", "out_dir", out_path(cfg, "eval"));
    std::string restorer_ckpt = jget<std::string>(s, "eval", "restorer", "");

    log << "eval: " << s.at("datasets").size() << " datasets -> " << out_dir << "\n";
    if (cfg.dry_run) return;
    guard_output(cfg, (fs::path(out_dir) / "report.json").string());

    std::optional<restoration::Restorer> restorer;
    if (!restorer_ckpt.empty()) {
        json meta = checkpoint::load_meta(restorer_ckpt);
        if (!meta.contains("restorer"))
            throw PreconditionError("restorer checkpoint required: " + restorer_ckpt);
        const json& r = meta["restorer"];
        restoration::RestorerConfig rcfg;
        rcfg.channels = r.at("channels").get<std::vector<int>>();
        rcfg.encoder_depths = r.at("encoder_depths").get<std::vector<int>>();
        rcfg.window_size = r.at("window_size").get<int>();
        rcfg.decoder_kernel = r.at("decoder_kernel").get<int>();
        rcfg.attn_dim = r.at("attn_dim").get<int>();
        restorer.emplace(rcfg, 1);
        restorer->load(restorer_ckpt);
    }

    std::vector<evalkit::DatasetEval> datasets;
    for (const auto& ds : s.at("datasets")) {
        evalkit::DatasetEval d;
        d.dataset = ds.at("name").get<std::string>();
        d.split = ds.at("split").get<std::string>();
        for (const auto& r : read_manifest_checked(ds.at("manifest").get<std::string>())) {
            if (!r.kept) continue;
            Image degraded = read_png(r.gen_path);
            Image reference = read_png(r.clean_path);
            Image output = restorer ? restorer->restore(degraded) : degraded;
            d.pairs.emplace_back(std::move(output), std::move(reference));
        }
        if (d.pairs.empty())
            throw PreconditionError("eval: dataset '" + d.dataset + "' has no kept pairs");
        datasets.push_back(std::move(d));
    }

    auto report = evalkit::build_report(datasets);
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "report.csv");
        f << report.to_csv();
    }
    {
        std::ofstream f(fs::path(out_dir) / "report.json");
        f << report.to_json();
    }
    for (const auto& row : report.rows)
        log << "eval: " << row.split << "/" << row.dataset << " psnr " << row.psnr << " ssim "
            << row.ssim << " fid " << row.fid << "\n";
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log,
                std::ostream& err) {
    try {
        if (name == "toyworld") cmd_toyworld(cfg, log);
        else if (name == "stats") cmd_stats(cfg, log);
        else if (name == "train-gen") cmd_train_gen(cfg, log);
        else if (name == "train-scm") cmd_train_scm(cfg, log);
        else if (name == "synth") cmd_synth(cfg, log);
        else if (name == "mix") cmd_mix(cfg, log);
        else if (name == "train-restore") cmd_train_restore(cfg, log);
        else if (name == "eval") cmd_eval(cfg, log);
        else {
            err << "config error: unknown command '" << name << "'\n";
            return kConfigError;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const PreconditionError& e) {
        err << "precondition error: " << e.what() << "\n";
        return kPreconditionError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kOk;
}

}  // namespace degforge::pipeline
