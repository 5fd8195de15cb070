#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "cmt/checkpoint.hpp"
#include "cmt/cli.hpp"
#include "cmt/data.hpp"
#include "cmt/errors.hpp"

using namespace cmt;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cmt");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("cmt_cli_" + name);
    fs::remove_all(d);
    return d;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = file_bytes(e.path());
    return files;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> r;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) r.push_back(l);
    return r;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> r;
    std::istringstream in(line);
    for (std::string c; std::getline(in, c, ',');) r.push_back(c);
    return r;
}

fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = fs::temp_directory_path() / ("cmt_cli_" + name + ".json");
    std::ofstream(p) << text;
    return p;
}

const char* kTinyTrain = R"({"preset": "toy", "epochs": 2, "batch_size": 2, "seed": 3})";

fs::path synth(const std::string& name, const std::string& protocol, int samples = 2, int size = 32) {
    const fs::path d = fresh_dir(name);
    const CliRun r = cli({"synth-data", "--out", d.string(), "--samples", std::to_string(samples), "--size",
                       std::to_string(size), "--seed", "5", "--protocol", protocol});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
}

}  // namespace

TEST(CliSynth, EmptyDatasetIsValid) {
    const fs::path d = fresh_dir("empty");
    const CliRun r = cli({"synth-data", "--out", d.string(), "--samples", "0"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(load_dataset(d).samples.empty());
}

TEST(CliSynth, DefaultShapes) {
    const fs::path d = fresh_dir("shapes");
    ASSERT_EQ(cli({"synth-data", "--out", d.string(), "--samples", "1", "--size", "64", "--bands", "4", "--ratio", "4"}).code, 0);
    const Dataset ds = load_dataset(d);
    ASSERT_EQ(ds.samples.size(), 1u);
    EXPECT_EQ(ds.samples[0].pan.shape(), (Shape{64, 64, 1}));
    EXPECT_EQ(ds.samples[0].lrms.shape(), (Shape{16, 16, 4}));
    EXPECT_EQ(ds.samples[0].gt->shape(), (Shape{64, 64, 4}));
}

TEST(CliSynth, SameSeedSameBytes) {
    const fs::path a = synth("same_a", "reduced"), b = synth("same_b", "reduced");
    EXPECT_EQ(tree(a), tree(b));
    EXPECT_FALSE(tree(a).empty());
}

TEST(CliSynth, InvalidExtentsAreUsageErrors) {
    const fs::path d = fresh_dir("bad");
    const CliRun r = cli({"synth-data", "--out", d.string(), "--size", "30", "--ratio", "4"});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
    EXPECT_EQ(cli({"synth-data"}).code, 2);
    EXPECT_EQ(cli({"no-such-command"}).code, 2);
    EXPECT_EQ(cli({"synth-data", "--out", d.string(), "--protocol", "sideways"}).code, 2);
}

TEST(CliTrain, WritesArtifactsAndReproducesBytes) {
    const fs::path data = synth("train_data", "reduced", 2, 16);
    const fs::path cfg = write_config("tiny", kTinyTrain);
    const fs::path a = fresh_dir("train_a"), b = fresh_dir("train_b");
    const CliRun ra = cli({"train", "--data", data.string(), "--config", cfg.string(), "--out", a.string()});
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(cli({"train", "--data", data.string(), "--config", cfg.string(), "--out", b.string()}).code, 0);
    EXPECT_EQ(tree(a), tree(b));
    EXPECT_EQ(lines(file_bytes(a / "loss_history.csv")).size(), 3u);
    EXPECT_TRUE(fs::exists(a / "checkpoint" / "manifest.json"));
    const auto echoed = nlohmann::json::parse(file_bytes(a / "effective_config.json"));
    EXPECT_EQ(echoed.at("epochs"), 2);
    EXPECT_EQ(echoed.at("channels"), 8);
}

TEST(CliTrain, FlagsOverrideFileAndVariantIsRecorded) {
    const fs::path data = synth("train_v1", "reduced", 2, 16);
    const fs::path cfg = write_config("tiny_v", kTinyTrain);
    const fs::path out = fresh_dir("train_v1_out");
    const CliRun r = cli({"train", "--data", data.string(), "--config", cfg.string(), "--out", out.string(), "--variant", "v1",
                       "--epochs", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_checkpoint(out / "checkpoint").config.variant, Variant::V1);
    EXPECT_EQ(lines(file_bytes(out / "loss_history.csv")).size(), 2u);
}

TEST(CliTrain, MissingGroundTruthIsProtocolError) {
    const fs::path data = synth("train_full", "full", 2, 16);
    const fs::path cfg = write_config("tiny_full", kTinyTrain);
    const CliRun r = cli({"train", "--data", data.string(), "--config", cfg.string(), "--out", fresh_dir("x").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("ground"), std::string::npos) << r.err;
}

TEST(CliConfig, UnknownKeyIsRejected) {
    const fs::path data = synth("cfg_data", "reduced", 1, 16);
    const fs::path cfg = write_config("unknown", R"({"preset": "toy", "epochs": 1, "learning_rate": 0.1})");
    const CliRun r = cli({"train", "--data", data.string(), "--config", cfg.string(), "--out", fresh_dir("y").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
    EXPECT_THROW(RunConfig::from_json({{"heads", "two"}}), ConfigError);
    EXPECT_THROW(RunConfig::from_json({{"preset", "huge"}}), ConfigError);
    const RunConfig rc = RunConfig::from_json({{"preset", "toy"}, {"heads", 1}});
    EXPECT_EQ(rc.model.heads, 1u);
    EXPECT_EQ(rc.model.channels, 8u);
    EXPECT_EQ(RunConfig::from_json(rc.to_json()).to_json(), rc.to_json());
}

TEST(CliEval, ColumnsFollowTheProtocol) {
    const fs::path reduced = synth("eval_r", "reduced"), full = synth("eval_f", "full");
    const fs::path cfg = write_config("tiny_eval", kTinyTrain);
    const fs::path run = fresh_dir("eval_run");
    ASSERT_EQ(cli({"train", "--data", reduced.string(), "--config", cfg.string(), "--out", run.string()}).code, 0);

    const fs::path rep_r = fresh_dir("eval_r_csv") / "report.csv";
    ASSERT_EQ(cli({"eval", "--data", reduced.string(), "--checkpoint", (run / "checkpoint").string(), "--out",
                   rep_r.string()}).code,
              0);
    const auto lr = lines(file_bytes(rep_r));
    ASSERT_EQ(lr.size(), 1u + 2u + 2u);
    EXPECT_EQ(split(lr[0]), (std::vector<std::string>{"sample", "SAM", "ERGAS", "Q2n"}));
    EXPECT_EQ(split(lr[3])[0], "mean");
    EXPECT_EQ(split(lr[4])[0], "std");

    const fs::path rep_f = fresh_dir("eval_f_csv") / "report.csv";
    ASSERT_EQ(cli({"eval", "--data", full.string(), "--checkpoint", (run / "checkpoint").string(), "--out",
                   rep_f.string()}).code,
              0);
    const auto lf = lines(file_bytes(rep_f));
    ASSERT_EQ(lf.size(), 5u);
    EXPECT_EQ(split(lf[0]), (std::vector<std::string>{"sample", "D_lambda", "D_s", "HQNR"}));
    for (std::size_t i = 1; i <= 2; ++i) {
        const auto c = split(lf[i]);
        const double dl = std::stod(c[1]), ds = std::stod(c[2]), q = std::stod(c[3]);
        EXPECT_NEAR(q, (1 - dl) * (1 - ds), 1e-12);
    }

    EXPECT_EQ(cli({"eval", "--data", full.string(), "--checkpoint", (run / "checkpoint").string(), "--out",
                   rep_f.string(), "--protocol", "reduced"}).code,
              2);
}

TEST(CliEval, CheckpointMismatchIsIntegrityError) {
    const fs::path data = synth("eval_mismatch", "reduced", 1, 32);
    const fs::path ck = fresh_dir("eval_ck");
    ModelConfig m = ModelConfig::toy();
    m.bands = 3;
    Rng rng(0);
    save_checkpoint({m, init_params(m, rng), 0, 0}, ck);
    const CliRun r = cli({"eval", "--data", data.string(), "--checkpoint", ck.string(), "--out",
                       (fresh_dir("eval_mm") / "r.csv").string()});
    EXPECT_NE(r.code, 0);
    EXPECT_FALSE(r.err.empty());
}

TEST(CliGradcheck, DefaultPassesAndListsEveryParameterOnce) {
    const CliRun r = cli({"gradcheck"});
    EXPECT_EQ(r.code, 0) << r.out;
    Rng rng(0);
    const ParamSet p = init_params(ModelConfig::toy(), rng);
    std::set<std::string> seen;
    for (const auto& l : lines(r.out)) {
        std::istringstream in(l);
        std::string status, name;
        in >> status >> name;
        if (status == "ok" || status == "FAIL") EXPECT_TRUE(seen.insert(name).second) << name;
    }
    EXPECT_EQ(seen.size(), p.size());
    for (const auto& n : p.names()) EXPECT_TRUE(seen.count(n)) << n;
}

TEST(CliGradcheck, TightToleranceFailsWithExitOne) {
    const CliRun r = cli({"gradcheck", "--tolerance", "1e-12", "--extent", "4"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("worst"), std::string::npos);
}

TEST(CliAblate, FourVariantRowsAndSharedShuffle) {
    const fs::path reduced = synth("ab_r", "reduced", 2, 32), full = synth("ab_f", "full", 2, 32);
    const fs::path cfg = write_config("tiny_ab", R"({"preset": "toy", "epochs": 1, "batch_size": 2, "seed": 1})");
    const fs::path out = fresh_dir("ab_out");
    const CliRun r = cli({"ablate", "--data-reduced", reduced.string(), "--data-full", full.string(), "--config", cfg.string(),
                       "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err << r.out;
    const auto rows = lines(file_bytes(out / "ablation_full.csv"));
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(split(rows[0]), (std::vector<std::string>{"variant", "D_lambda_mean", "D_lambda_std", "D_s_mean", "D_s_std",
                                                        "HQNR_mean", "HQNR_std"}));
    const std::vector<std::string> labels = {"V1", "V2", "V3", "CMT"};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(split(rows[i + 1])[0], labels[i]);
    EXPECT_EQ(lines(file_bytes(out / "ablation_reduced.csv")).size(), 5u);

    std::set<std::string> digests;
    const auto audit = lines(file_bytes(out / "shuffle_audit.csv"));
    ASSERT_EQ(audit.size(), 5u);
    for (std::size_t i = 1; i < audit.size(); ++i) digests.insert(split(audit[i])[1]);
    EXPECT_EQ(digests.size(), 1u);
    EXPECT_NE(r.out.find("V1 equals full model with ones modulators: yes"), std::string::npos);
}

TEST(CliBinary, ExitCodesThroughTheProcess) {
    const auto status = [](const std::string& args) {
        const int s = std::system((std::string(CMT_CLI_BINARY) + " " + args + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status("--help"), 0);
    EXPECT_EQ(status(""), 2);
    EXPECT_EQ(status("synth-data --out " + fresh_dir("bin").string() + " --samples 0"), 0);
    EXPECT_EQ(status("synth-data --out " + fresh_dir("bin2").string() + " --size 30"), 2);
}
