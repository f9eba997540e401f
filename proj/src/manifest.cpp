#include "degforge/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace degforge::manifest {

using json = nlohmann::ordered_json;

std::string ManifestRecord::to_json_line() const {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["clean_path"] = clean_path;
    j["gen_path"] = gen_path;
    j["degradation"] = toyworld::to_string(degradation);
    if (mu_gen) j["mu_gen"] = *mu_gen; else j["mu_gen"] = nullptr;
    if (sigma_gen) j["sigma_gen"] = *sigma_gen; else j["sigma_gen"] = nullptr;
    j["mu_realized"] = mu_realized;
    j["sigma_realized"] = sigma_realized;
    j["kept"] = kept;
    j["seed"] = seed;
    j["generator_checkpoint_id"] = generator_checkpoint_id;
    j["gt_mode"] = gt_mode;
    if (source) j["source"] = *source;
    return j.dump();
}

ManifestRecord ManifestRecord::from_json_line(const std::string& line) {
    json j = json::parse(line);
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw std::runtime_error("manifest: unsupported schema_version");
    ManifestRecord r;
    r.clean_path = j.at("clean_path").get<std::string>();
    r.gen_path = j.at("gen_path").get<std::string>();
    r.degradation = toyworld::degradation_from_string(j.at("degradation").get<std::string>());
    if (!j.at("mu_gen").is_null()) r.mu_gen = j.at("mu_gen").get<double>();
    if (!j.at("sigma_gen").is_null()) r.sigma_gen = j.at("sigma_gen").get<double>();
    r.mu_realized = j.at("mu_realized").get<double>();
    r.sigma_realized = j.at("sigma_realized").get<double>();
    r.kept = j.at("kept").get<bool>();
    r.seed = j.at("seed").get<uint64_t>();
    r.generator_checkpoint_id = j.at("generator_checkpoint_id").get<std::string>();
    r.gt_mode = j.at("gt_mode").get<std::string>();
    if (j.contains("source")) r.source = j.at("source").get<std::string>();
    return r;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
    for (const auto& r : records) out << r.to_json_line() << "\n";
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
    std::vector<ManifestRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(ManifestRecord::from_json_line(line));
    }
    return out;
}

}  // namespace degforge::manifest
