#include "degforge/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace degforge::checkpoint {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json read_manifest(const std::string& dir) {
    fs::path p = fs::path(dir) / "manifest.json";
    if (!fs::exists(p)) {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["sections"] = json::object();
        j["meta"] = json::object();
        return j;
    }
    std::ifstream in(p);
    json j = json::parse(in);
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw std::runtime_error("checkpoint: unsupported schema_version in " + p.string());
    return j;
}

void write_manifest(const std::string& dir, const json& j) {
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << j.dump(2) << "\n";
}

// float32 little-endian serialization; asserts a little-endian host, which is
// all this project targets.
void append_f32(std::string& buf, double x) {
    float f = static_cast<float>(x);
    char b[4];
    std::memcpy(b, &f, 4);
    buf.append(b, 4);
}

}  // namespace

void save_section(const std::string& dir, const std::string& section,
                  const std::vector<const nn::Param*>& params) {
    fs::create_directories(dir);
    json manifest = read_manifest(dir);

    std::string blob;
    json tensors = json::array();
    for (const auto* p : params) {
        json t;
        t["name"] = p->name;
        t["shape"] = p->value.shape;
        t["offset"] = blob.size();
        tensors.push_back(t);
        for (double x : p->value.v) append_f32(blob, x);
    }
    std::string file = section + ".bin";
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    manifest["sections"][section] = {{"file", file}, {"tensors", tensors}};
    write_manifest(dir, manifest);
}

void load_section(const std::string& dir, const std::string& section, nn::ParamStore& store) {
    json manifest = read_manifest(dir);
    if (!manifest["sections"].contains(section))
        throw std::runtime_error("checkpoint: missing section '" + section + "' in " + dir);
    const auto& sec = manifest["sections"][section];
    std::string bytes = section_bytes(dir, section);

    std::set<std::string> loaded;
    for (const auto& t : sec.at("tensors")) {
        std::string name = t.at("name").get<std::string>();
        loaded.insert(name);
        std::vector<int> shape = t.at("shape").get<std::vector<int>>();
        size_t offset = t.at("offset").get<size_t>();
        nn::Param* p = store.find(name);
        if (!p) throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
        if (p->value.shape != shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        size_t n = static_cast<size_t>(p->value.numel());
        if (offset + n * 4 > bytes.size())
            throw std::runtime_error("checkpoint: blob too short for '" + name + "'");
        for (size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, bytes.data() + offset + i * 4, 4);
            p->value[static_cast<int64_t>(i)] = static_cast<double>(f);
        }
    }
    // Silent partial loads hide real divergence between a model and its
    // checkpoint, so every parameter in the store must be covered.
    for (const auto* p : static_cast<const nn::ParamStore&>(store).all())
        if (!loaded.count(p->name))
            throw std::runtime_error("checkpoint: section '" + section +
                                     "' has no tensor for param '" + p->name + "'");
}

bool has_section(const std::string& dir, const std::string& section) {
    if (!fs::exists(fs::path(dir) / "manifest.json")) return false;
    json manifest = read_manifest(dir);
    return manifest["sections"].contains(section);
}

std::string section_bytes(const std::string& dir, const std::string& section) {
    json manifest = read_manifest(dir);
    if (!manifest["sections"].contains(section))
        throw std::runtime_error("checkpoint: missing section '" + section + "'");
    std::string file = manifest["sections"][section].at("file").get<std::string>();
    std::ifstream in(fs::path(dir) / file, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open blob for '" + section + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void save_meta(const std::string& dir, const nlohmann::ordered_json& meta) {
    fs::create_directories(dir);
    json manifest = read_manifest(dir);
    manifest["meta"] = meta;
    write_manifest(dir, manifest);
}

nlohmann::ordered_json load_meta(const std::string& dir) {
    return read_manifest(dir)["meta"];
}

}  // namespace degforge::checkpoint
