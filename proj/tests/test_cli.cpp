#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

// Integration tests spawn the installed binary; cases share one dataset and
// one trained run, produced by the first case.

namespace {

const fs::path kRoot = fs::temp_directory_path() / "c4av_cli_test";
const fs::path kData = kRoot / "data";
const fs::path kRun = kRoot / "run";

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    fs::path log = kRoot / ("cmd_" + std::to_string(counter++) + ".log");
    std::string cmd = env + (env.empty() ? "" : " ") + C4AV_CLI_PATH " " + args + " > \"" +
                      log.string() + "\" 2>&1";
    int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

const std::string kSynthArgs = "--images 12 --distractors 4 --seed 9";

}  // namespace

TEST_CASE("synth: deterministic output, summary, bad arguments") {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);

    CmdResult r = run_cli("synth --out \"" + kData.string() + "\" " + kSynthArgs);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("train images: 10") != std::string::npos);
    CHECK(r.output.find("train proposal oracle") != std::string::npos);
    for (const char* split : {"train", "val", "test"})
        for (const char* f : {"images.json", "commands.json", "proposals.json"})
            CHECK(fs::exists(kData / split / f));

    fs::path again = kRoot / "data2";
    CHECK(run_cli("synth --out \"" + again.string() + "\" " + kSynthArgs).exit_code == 0);
    for (const char* f : {"images.json", "commands.json", "proposals.json"})
        CHECK(read_file(kData / "train" / f) == read_file(again / "train" / f));

    CHECK(run_cli("synth --out \"" + (kRoot / "bad").string() + "\" --images -1").exit_code == 2);
    CHECK(run_cli("synth").exit_code == 2);  // missing required --out
    CHECK(run_cli("").exit_code == 2);       // missing subcommand
    CHECK(run_cli("--help").exit_code == 0);
}

TEST_CASE("train: tiny run writes metrics, resolved config, checkpoints") {
    CmdResult r = run_cli("train --data \"" + kData.string() + "\" --out \"" + kRun.string() +
                          "\" --tiny-backbone --deterministic --epochs 2 --batch 4 --k 12 "
                          "--lr 0.02 --seed 3");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("best val AP50") != std::string::npos);
    CHECK(count_lines(kRun / "metrics.jsonl") == 2);
    CHECK(fs::exists(kRun / "last" / "params.bin"));
    CHECK(fs::exists(kRun / "best" / "meta.json"));

    json rc = json::parse(read_file(kRun / "resolved_config.json"));
    CHECK(rc.at("backbone") == "tiny");
    CHECK(rc.at("epochs") == 2);
    CHECK(rc.at("lr") == doctest::Approx(0.02));

    // first metrics line carries the expected keys
    std::string first = read_file(kRun / "metrics.jsonl");
    json m = json::parse(first.substr(0, first.find('\n')));
    for (const char* key : {"epoch", "lr", "train_loss", "val_ap50"}) CHECK(m.contains(key));

    CHECK(run_cli("train --out \"" + (kRoot / "x").string() + "\" --epochs 0").exit_code == 2);
    CHECK(run_cli("train --data \"" + kData.string() + "\" --epochs 0").exit_code == 2);
}

TEST_CASE("train: config file merges under explicit flags") {
    fs::path cfg = kRoot / "config.json";
    {
        std::ofstream out(cfg);
        out << R"({"epochs": 7, "lr": 0.5, "tiny_backbone": true, "deterministic": true,)"
            << R"( "k": 12, "batch_size": 4})";
    }
    fs::path out_dir = kRoot / "cfg_run";
    // --epochs 0 on the command line beats the file's 7; lr comes from the file
    CmdResult r = run_cli("train --data \"" + kData.string() + "\" --out \"" + out_dir.string() +
                          "\" --config \"" + cfg.string() + "\" --epochs 0");
    CHECK(r.exit_code == 0);
    json rc = json::parse(read_file(out_dir / "resolved_config.json"));
    CHECK(rc.at("epochs") == 0);
    CHECK(rc.at("lr") == doctest::Approx(0.5));
    CHECK(rc.at("backbone") == "tiny");
    CHECK(count_lines(out_dir / "metrics.jsonl") == 1);  // dry run: one entry

    fs::path bad = kRoot / "bad_config.json";
    {
        std::ofstream out(bad);
        out << R"({"learning_rate": 0.1})";
    }
    CmdResult rb = run_cli("train --data \"" + kData.string() + "\" --out \"" +
                           (kRoot / "y").string() + "\" --config \"" + bad.string() + "\"");
    CHECK(rb.exit_code == 2);
    CHECK(rb.output.find("learning_rate") != std::string::npos);
}

TEST_CASE("predict: full-cardinality submission, byte-identical reruns") {
    fs::path sub = kRoot / "val_submission.json";
    CmdResult r = run_cli("predict --data \"" + kData.string() + "\" --split val --checkpoint \"" +
                          (kRun / "best").string() + "\" --out \"" + sub.string() + "\"");
    CHECK(r.exit_code == 0);
    json j = json::parse(read_file(sub));
    CHECK(j.is_object());
    CHECK(j.size() == 1);  // 12 images -> 1 val command
    for (const auto& [id, arr] : j.items()) {
        CHECK(arr.is_array());
        CHECK(arr.size() == 4);
    }

    fs::path sub2 = kRoot / "val_submission2.json";
    CHECK(run_cli("predict --data \"" + kData.string() + "\" --split val --checkpoint \"" +
                  (kRun / "best").string() + "\" --out \"" + sub2.string() + "\"")
              .exit_code == 0);
    CHECK(read_file(sub) == read_file(sub2));

    // the test split (no gt) is predictable too
    fs::path test_sub = kRoot / "test_submission.json";
    CHECK(run_cli("predict --data \"" + kData.string() + "\" --split test --checkpoint \"" +
                  (kRun / "best").string() + "\" --out \"" + test_sub.string() + "\"")
              .exit_code == 0);
    CHECK(json::parse(read_file(test_sub)).size() == 1);
}

TEST_CASE("eval: checkpoint and submission modes, reports, failure modes") {
    CmdResult r = run_cli("eval --data \"" + kData.string() + "\" --split val --checkpoint \"" +
                          (kRun / "best").string() + "\" --report \"" +
                          (kRoot / "report.json").string() + "\"");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("AP50: ") != std::string::npos);
    CHECK(r.output.find("Oracle: ") != std::string::npos);
    json rep = json::parse(read_file(kRoot / "report.json"));
    CHECK(rep.at("num_commands") == 1);
    CHECK(rep.at("per_command").is_array());

    CmdResult rs = run_cli("eval --data \"" + kData.string() + "\" --split val --submission \"" +
                           (kRoot / "val_submission.json").string() + "\" --k 12");
    CHECK(rs.exit_code == 0);
    CHECK(rs.output.find("AP50: ") != std::string::npos);

    // submission missing an id: runtime failure naming it
    fs::path empty_sub = kRoot / "empty_submission.json";
    {
        std::ofstream out(empty_sub);
        out << "{}\n";
    }
    CmdResult rm = run_cli("eval --data \"" + kData.string() + "\" --split val --submission \"" +
                           empty_sub.string() + "\"");
    CHECK(rm.exit_code == 1);
    CHECK(rm.output.find("missing") != std::string::npos);
    CHECK(rm.output.find("cmd_") != std::string::npos);

    // need exactly one of --checkpoint/--submission
    CHECK(run_cli("eval --data \"" + kData.string() + "\"").exit_code == 2);
    CHECK(run_cli("eval --data \"" + kData.string() + "\" --checkpoint a --submission b")
              .exit_code == 2);

    // corrupted checkpoint meta: runtime failure naming the field
    fs::path broken = kRoot / "broken_ck";
    fs::copy(kRun / "best", broken, fs::copy_options::recursive);
    {
        std::string meta = read_file(broken / "meta.json");
        auto pos = meta.find("\"epoch\"");
        REQUIRE(pos != std::string::npos);
        meta.replace(pos, 7, "\"epoxy\"");
        std::ofstream out(broken / "meta.json", std::ios::trunc);
        out << meta;
    }
    CmdResult rc = run_cli("eval --data \"" + kData.string() + "\" --split val --checkpoint \"" +
                           broken.string() + "\"");
    CHECK(rc.exit_code == 1);
    CHECK(rc.output.find("epoch") != std::string::npos);
}

TEST_CASE("visualize: renders requested ids, rejects unknown ones") {
    // ids present in the val split of a 12-image dataset: cmd_000011
    fs::path vis = kRoot / "vis";
    CmdResult r = run_cli("visualize --data \"" + kData.string() + "\" --split val --submission \"" +
                          (kRoot / "val_submission.json").string() + "\" --out \"" + vis.string() +
                          "\"");
    CHECK(r.exit_code == 0);
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(vis))
        if (e.path().extension() == ".png") ++pngs;
    CHECK(pngs == 1);

    CmdResult ru = run_cli("visualize --data \"" + kData.string() +
                           "\" --split val --submission \"" +
                           (kRoot / "val_submission.json").string() + "\" --ids zz --out \"" +
                           (kRoot / "vis2").string() + "\"");
    CHECK(ru.exit_code == 1);
    CHECK(ru.output.find("zz") != std::string::npos);
}

TEST_CASE("C4AV_DATA supplies the default data root") {
    CmdResult r = run_cli("eval --split val --checkpoint \"" + (kRun / "best").string() + "\"",
                          "C4AV_DATA=\"" + kData.string() + "\"");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("AP50: ") != std::string::npos);

    CmdResult rm = run_cli("predict --checkpoint \"" + (kRun / "best").string() +
                           "\" --out /tmp/unused.json",
                           "C4AV_DATA=");
    CHECK(rm.exit_code == 2);
    fs::remove_all(kRoot);
}
