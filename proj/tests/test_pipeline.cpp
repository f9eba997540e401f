#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "degforge/manifest.hpp"
#include "degforge/pipeline.hpp"

using namespace degforge;
using namespace degforge::pipeline;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fresh_dir(const std::string& name) {
    std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& cmd, const RunConfig& cfg, std::string* err_out = nullptr) {
    std::ostringstream log, err;
    int rc = run_command(cmd, cfg, log, err);
    if (err_out) *err_out = err.str();
    return rc;
}

ordered_json tiny_toyworld(const std::string& out) {
    ordered_json j;
    j["seed"] = 5;
    j["out"] = out;
    j["toyworld"] = {{"count", 2},
                     {"heldout", 1},
                     {"height", 32},
                     {"width", 32},
                     {"degradations", ordered_json::array({"haze"})}};
    return j;
}

}  // namespace

TEST_CASE("unknown keys are rejected with their key path") {
    std::string err;
    ordered_json j;
    j["train_gen"] = {{"stepz", 10}};
    CHECK_THROWS_AS(RunConfig::from_json(j, {}), ConfigError);
    try {
        RunConfig::from_json(j, {});
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train_gen.stepz") != std::string::npos);
    }

    ordered_json top;
    top["toyland"] = ordered_json::object();
    CHECK_THROWS_AS(RunConfig::from_json(top, {}), ConfigError);
}

TEST_CASE("type and value violations raise ConfigError") {
    ordered_json j;
    j["workers"] = "many";
    CHECK_THROWS_AS(RunConfig::from_json(j, {}), ConfigError);

    ordered_json neg;
    neg["workers"] = 0;
    CHECK_THROWS_AS(RunConfig::from_json(neg, {}), ConfigError);

    ordered_json deg;
    deg["toyworld"] = {{"degradations", ordered_json::array({"fog"})}};
    CHECK_THROWS_AS(RunConfig::from_json(deg, {}), ConfigError);

    ordered_json split;
    split["eval"] = {{"datasets", ordered_json::array({{{"name", "a"},
                                                        {"split", "sideways"},
                                                        {"manifest", "m.jsonl"}}})}};
    CHECK_THROWS_AS(RunConfig::from_json(split, {}), ConfigError);
}

TEST_CASE("flag overrides win over the config file") {
    ordered_json j;
    j["seed"] = 3;
    j["out"] = "from_config";
    Overrides ov;
    ov.seed = 9;
    ov.out = "from_flags";
    ov.overwrite = true;
    auto cfg = RunConfig::from_json(j, ov);
    CHECK(cfg.seed == 9);
    CHECK(cfg.out == "from_flags");
    CHECK(cfg.overwrite);

    auto plain = RunConfig::from_json(j, {});
    CHECK(plain.seed == 3);
    CHECK(plain.out == "from_config");
}

TEST_CASE("load rejects missing and malformed config files") {
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json", {}), ConfigError);
    std::string dir = fresh_dir("degforge_cfg_bad");
    std::ofstream(dir + "/broken.json") << "{ not json";
    CHECK_THROWS_AS(RunConfig::load(dir + "/broken.json", {}), ConfigError);
}

TEST_CASE("unknown command exits with the config error code") {
    auto cfg = RunConfig::from_json(ordered_json::object(), {});
    std::string err;
    CHECK(run("frobnicate", cfg, &err) == kConfigError);
    CHECK(err.find("unknown command") != std::string::npos);
}

TEST_CASE("toyworld command writes manifests and honors clobber protection") {
    std::string out = fresh_dir("degforge_pipe_toy") + "/run";
    auto cfg = RunConfig::from_json(tiny_toyworld(out), {});
    CHECK(run("toyworld", cfg) == kOk);
    auto rows = manifest::read_manifest(out + "/toyworld/manifest.jsonl");
    CHECK(rows.size() == 2);  // count x 1 degradation
    auto held = manifest::read_manifest(out + "/toyworld/heldout.jsonl");
    CHECK(held.size() == 1);
    for (const auto& r : rows) {
        CHECK(fs::exists(r.gen_path));
        CHECK(fs::exists(r.clean_path));
        CHECK(r.gt_mode == "clean");
    }

    // Re-running without --overwrite refuses to clobber.
    std::string err;
    CHECK(run("toyworld", cfg, &err) == kPreconditionError);
    CHECK(err.find("overwrite") != std::string::npos);

    Overrides ov;
    ov.overwrite = true;
    auto cfg2 = RunConfig::from_json(tiny_toyworld(out), ov);
    CHECK(run("toyworld", cfg2) == kOk);
}

TEST_CASE("dry run prints the plan without side effects") {
    std::string out = fresh_dir("degforge_pipe_dry") + "/run";
    Overrides ov;
    ov.dry_run = true;
    auto cfg = RunConfig::from_json(tiny_toyworld(out), ov);
    std::ostringstream log, err;
    CHECK(run_command("toyworld", cfg, log, err) == kOk);
    CHECK(!log.str().empty());
    CHECK(!fs::exists(out + "/toyworld/manifest.jsonl"));
}

TEST_CASE("stats requires the manifest produced by toyworld") {
    std::string out = fresh_dir("degforge_pipe_stats") + "/run";
    auto cfg = RunConfig::from_json(tiny_toyworld(out), {});
    std::string err;
    CHECK(run("stats", cfg, &err) == kPreconditionError);

    REQUIRE(run("toyworld", cfg) == kOk);
    CHECK(run("stats", cfg) == kOk);
    CHECK(fs::exists(out + "/histograms.json"));
}

TEST_CASE("train-scm without a generator checkpoint is a precondition error") {
    std::string out = fresh_dir("degforge_pipe_scm") + "/run";
    auto cfg = RunConfig::from_json(tiny_toyworld(out), {});
    REQUIRE(run("toyworld", cfg) == kOk);
    REQUIRE(run("stats", cfg) == kOk);
    std::string err;
    CHECK(run("train-scm", cfg, &err) == kPreconditionError);
    CHECK(err.find("generator checkpoint") != std::string::npos);
}

TEST_CASE("eval without datasets is a config error") {
    auto cfg = RunConfig::from_json(ordered_json::object(), {});
    std::string err;
    CHECK(run("eval", cfg, &err) == kConfigError);
    CHECK(err.find("eval.datasets") != std::string::npos);
}

TEST_CASE("mix is deterministic and reports counts") {
    std::string dir = fresh_dir("degforge_pipe_mix");
    auto mk = [&](const std::string& name, int n, const std::string& stem) {
        std::vector<manifest::ManifestRecord> rows;
        for (int i = 0; i < n; ++i) {
            manifest::ManifestRecord r;
            r.clean_path = dir + "/" + stem + std::to_string(i) + "c.png";
            r.gen_path = dir + "/" + stem + std::to_string(i) + ".png";
            rows.push_back(r);
        }
        manifest::write_manifest(dir + "/" + name, rows);
    };
    mk("existing.jsonl", 3, "e");
    mk("generated.jsonl", 2, "g");
    ordered_json j;
    j["out"] = dir;
    j["mix"] = {{"existing", dir + "/existing.jsonl"},
                {"generated", dir + "/generated.jsonl"},
                {"out_dir", dir + "/mix"}};
    auto cfg = RunConfig::from_json(j, {});
    CHECK(run("mix", cfg) == kOk);
    CHECK(manifest::read_manifest(dir + "/mix/existing.jsonl").size() == 3);
    CHECK(manifest::read_manifest(dir + "/mix/gendeg.jsonl").size() == 2);
    CHECK(manifest::read_manifest(dir + "/mix/gends.jsonl").size() == 5);
}

#ifdef DEGFORGE_CLI_PATH
TEST_CASE("CLI exit codes match the contract") {
    std::string cli = DEGFORGE_CLI_PATH;
    REQUIRE(fs::exists(cli));
    std::string dir = fresh_dir("degforge_cli");

    auto sh = [&](const std::string& args) {
        int rc = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(rc);
    };

    // Missing config file.
    CHECK(sh("toyworld --config " + dir + "/missing.json") == kConfigError);

    // Unknown key in the config.
    std::ofstream(dir + "/bad.json") << R"({"toyworld": {"stepz": 1}})";
    CHECK(sh("toyworld --config " + dir + "/bad.json") == kConfigError);

    // Valid tiny run.
    std::ofstream(dir + "/ok.json") << R"({"seed": 2, "out": ")" << dir << R"(/run",
        "toyworld": {"count": 1, "height": 32, "width": 32,
                     "degradations": ["haze"]}})";
    CHECK(sh("toyworld --config " + dir + "/ok.json") == kOk);
    CHECK(fs::exists(dir + "/run/toyworld/manifest.jsonl"));

    // Clobber refusal, then --overwrite.
    CHECK(sh("toyworld --config " + dir + "/ok.json") == kPreconditionError);
    CHECK(sh("toyworld --config " + dir + "/ok.json --overwrite") == kOk);

    // Missing generator checkpoint.
    CHECK(sh("train-scm --config " + dir + "/ok.json") == kPreconditionError);

    // Flag override changes the output location.
    CHECK(sh("toyworld --config " + dir + "/ok.json --out " + dir + "/other") == kOk);
    CHECK(fs::exists(dir + "/other/toyworld/manifest.jsonl"));
}
#endif
