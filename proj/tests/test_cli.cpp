#include "qfpt/cli.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace qfpt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("qfpt_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "qfpt");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(QFPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, MinimalQfptdConfig) {
    const auto c = parse_config_text(R"({"N_B": 2, "theta": 0.43, "max_steps": 40, "trials": 0})", "min", "qfptd");
    EXPECT_EQ(c.command, "qfptd");
    EXPECT_EQ(c.n_b, 2);
    EXPECT_EQ(c.theta, 0.43);
    EXPECT_EQ(c.max_steps, 40);
    EXPECT_EQ(c.trials, 0u);
    EXPECT_EQ(c.mode, "ideal");
    EXPECT_EQ(c.seed, 1u);
    // Each interval restarts from the projected surviving space, so the cutoff covers one interval.
    EXPECT_EQ(c.n_cut, default_n_cut(2, 0.43));
    EXPECT_EQ(c.dt, 1e-3);
}

TEST(ParseConfig, UnknownKeyIsNamed) {
    try {
        parse_config_text(R"({"N_B": 2, "thetaa": 0.43})", "bad", "qfptd");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("thetaa"), std::string::npos) << e.what();
    }
}

TEST(ParseConfig, KeyOfAnotherCommandIsRejected) {
    EXPECT_THROW(parse_config_text(R"({"restarts": 3})", "x", "qfptd"), ConfigError);
    EXPECT_NO_THROW(parse_config_text(R"({"restarts": 3, "N_B": 2, "M_P": 4})", "x", "design-pulse"));
}

TEST(ParseConfig, SchemaViolations) {
    EXPECT_THROW(parse_config_text(R"({"theta": "big"})", "x", "qfptd"), ConfigError);
    EXPECT_THROW(parse_config_text(R"({"theta": -1})", "x", "qfptd"), ConfigError);
    EXPECT_THROW(parse_config_text(R"({"seed": -3})", "x", "qfptd"), ConfigError);
    EXPECT_THROW(parse_config_text(R"([1, 2])", "x", "qfptd"), ConfigError);
    EXPECT_THROW(parse_config_text(R"({"pulse_table": "/nonexistent/t.txt", "mode": "realistic", "trials": 5})", "x",
                                   "qfptd"),
                 ConfigError);
    EXPECT_THROW(parse_config("/nonexistent/config.json", "qfptd"), ConfigError);
}

TEST(ParseConfig, RoundTripIsIdentity) {
    const auto dir = scratch("roundtrip");
    const std::vector<std::pair<std::string, std::string>> cases{
        {"qfptd", R"({"N_B": 3, "theta": 0.2, "max_steps": 10, "trials": 100, "mode": "realistic",
                      "pulse_table": ")" QFPT_DATA_DIR R"(/reference_steps.txt", "M_P": 9,
                      "noise_sigma_over_w": 0.1, "spont_tau_s": 1.2, "detection_error": 0.01, "moments": true})"},
        {"design-pulse", R"({"N_B": 2, "M_P": 5, "restarts": 3})"},
        {"eval-pulse", R"({"noise_sigma_over_w": 0.05, "samples": 100})"},
        {"classical-fpt", R"({"E_B": 3.5, "trials": 10})"},
    };
    for (const auto& [cmd, text] : cases) {
        const auto a = parse_config_text(text, cmd, cmd);
        const auto p = dir / (cmd + ".json");
        spit(p, config_to_json(a).dump(2));
        EXPECT_EQ(parse_config(p.string(), cmd), a) << cmd;
    }
}

TEST(Run, GeometricLawFile) {
    const auto dir = scratch("geometric");
    const auto r = run_cli({"qfptd", "--ideal", "--nb", "1", "--theta", "0.43", "--steps", "60", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(dir / "qfptd.csv");
    const auto parsed = parse_result_csv(in);
    const auto g = geometric_reference(0.43, 60);
    ASSERT_EQ(parsed.prob.size(), 60u);
    for (std::size_t i = 0; i < 60; ++i) {
        EXPECT_NEAR(parsed.prob[i], g.probs[i], 1e-6);
        EXPECT_NEAR(parsed.time[i], 0.43 * static_cast<double>(i + 1), 1e-12);
    }
    const auto meta = json::parse(slurp(dir / "qfptd.meta.json"));
    EXPECT_EQ(meta["config"]["N_B"], 1);
    EXPECT_EQ(meta["mode"], "deterministic");
}

TEST(Run, ClassicalMetadataCarriesAnalyticMoments) {
    const auto dir = scratch("classical");
    const auto r = run_cli({"classical-fpt", "--eb", "2.5", "--trials", "200", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto meta = json::parse(slurp(dir / "classical_fpt.meta.json"));
    EXPECT_EQ(meta["analytic_moments"]["mean"], 2.0);
    EXPECT_EQ(meta["analytic_moments"]["second_moment"], 7.0);
    EXPECT_EQ(meta["config"]["E_B"], 2.5);
}

TEST(Run, AnalyzeTrialRecords) {
    const auto dir = scratch("analyze");
    spit(dir / "trials.csv", trial_records_csv({1, 2, 2, 0}));
    const auto r = run_cli({"analyze", "--trials-csv", (dir / "trials.csv").string(), "--theta", "0.5", "--steps", "3",
                            "--moments", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(dir / "analyze.csv");
    const auto parsed = parse_result_csv(in);
    EXPECT_EQ(parsed.prob, (std::vector<double>{0.25, 0.5, 0.0}));
    EXPECT_NEAR(parsed.stderr_col[0], std::sqrt(0.25 * 0.75 / 4), 1e-12);
    const auto meta = json::parse(slurp(dir / "analyze.meta.json"));
    EXPECT_DOUBLE_EQ(meta["censored_fraction"].get<double>(), 0.25);
    EXPECT_TRUE(meta.contains("moments"));
}

TEST(Run, FlagsOverrideConfig) {
    const auto dir = scratch("override");
    spit(dir / "c.json", R"({"N_B": 1, "theta": 0.5, "max_steps": 5})");
    const auto r = run_cli({"qfptd", "--config", (dir / "c.json").string(), "--steps", "7", "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto meta = json::parse(slurp(dir / "qfptd.meta.json"));
    EXPECT_EQ(meta["config"]["max_steps"], 7);
    EXPECT_EQ(meta["config"]["theta"], 0.5);
}

TEST(ExitCodes, ByErrorClass) {
    const auto dir = scratch("exit");
    const std::string out = " --out " + dir.string();
    EXPECT_EQ(run_binary("qfptd --nb 1 --theta 0.43 --steps 3" + out), 0);
    EXPECT_EQ(run_binary("qfptd --theta -1" + out), 1);
    EXPECT_EQ(run_binary("qfptd --bogus-flag" + out), 1);
    EXPECT_EQ(run_binary("qfptd --config /nonexistent.json" + out), 1);
    EXPECT_EQ(run_binary("qfptd --nb 1 --theta 8 --steps 3 --n-cut 12" + out), 3);
    EXPECT_EQ(run_binary("classical-fpt --dt 0.1 --trials 5" + out), 2);
    EXPECT_EQ(run_binary("--help"), 0);
}

TEST(Reproducibility, ByteIdenticalReruns) {
    const auto base = scratch("repro");
    spit(base / "trials.csv", trial_records_csv({1, 3, 0, 2, 2, 5}));
    const std::vector<std::vector<std::string>> commands{
        {"qfptd", "--nb", "2", "--theta", "0.43", "--steps", "8", "--moments"},
        {"qfptd", "--nb", "2", "--theta", "0.43", "--steps", "8", "--trials", "300", "--seed", "5"},
        {"qfptd", "--realistic", "--nb", "2", "--theta", "0.43", "--steps", "8", "--trials", "200", "--pulse-table",
         QFPT_DATA_DIR "/reference_steps.txt", "--mp", "9", "--noise-sigma-over-w", "0.13", "--spont-tau-s", "1.2"},
        {"design-pulse", "--nb", "2", "--mp", "4", "--restarts", "2", "--seed", "3"},
        {"eval-pulse", "--noise-sigma-over-w", "0.13", "--samples", "200"},
        {"classical-fpt", "--eb", "1.5", "--trials", "100", "--seed", "2"},
        {"analyze", "--trials-csv", (base / "trials.csv").string(), "--theta", "0.43"},
    };
    for (std::size_t i = 0; i < commands.size(); ++i) {
        const auto dir = base / ("run" + std::to_string(i));
        auto args = commands[i];
        args.push_back("--out");
        args.push_back(dir.string());
        std::vector<std::pair<std::string, std::string>> first;
        for (int rep = 0; rep < 2; ++rep) {
            const auto r = run_cli(args);
            ASSERT_EQ(r.code, 0) << commands[i][0] << ": " << r.err;
            std::vector<std::pair<std::string, std::string>> files;
            for (const auto& entry : fs::directory_iterator(dir))
                files.emplace_back(entry.path().filename().string(), slurp(entry.path()));
            std::sort(files.begin(), files.end());
            ASSERT_FALSE(files.empty());
            if (rep == 0) first = files;
            else EXPECT_TRUE(files == first) << commands[i][0];
        }
    }
}

TEST(Reproducibility, ResultsIndependentOfThreadCount) {
    const auto base = scratch("threads");
    const std::vector<std::string> args{"qfptd", "--nb", "2", "--theta", "0.43", "--steps", "8", "--trials", "500"};
    std::vector<std::string> csv;
    for (const std::string t : {"1", "3"}) {
        auto a = args;
        a.insert(a.begin(), {"--threads", t});
        a.push_back("--out");
        a.push_back((base / t).string());
        ASSERT_EQ(run_cli(a).code, 0);
        csv.push_back(slurp(base / t / "qfptd.csv"));
    }
    EXPECT_EQ(csv[0], csv[1]);
}
