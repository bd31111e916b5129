#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "epdg/cli/mock_fleet.hpp"
#include "epdg/discovery/discovery.hpp"
#include "nlohmann/json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
    int code = -1;
    std::string out;
};

// stderr is discarded; stdout is captured
Run cli(const std::string& args) {
    const std::string cmd = std::string(EPDG_CLI_PATH) + " " + args + " 2>/dev/null";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::vector<json> lines(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

std::string testdata(const std::string& name) { return std::string(EPDG_TESTDATA_DIR) + "/" + name; }

std::string data(const std::string& name) { return std::string(EPDG_DATA_DIR) + "/data/" + name; }

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("epdg_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
    static inline int counter_ = 0;
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

TEST(Cli, DiscoverStubRange) {
    const auto r = cli("discover --mcc 232 --mnc 00-10 --stub-resolver " + testdata("stub_resolver.json"));
    ASSERT_EQ(r.code, 0);
    const auto recs = lines(r.out);
    ASSERT_EQ(recs.size(), 11u);
    EXPECT_EQ(recs[1]["plmn"], "232-01");
    EXPECT_EQ(recs[1]["addresses"], json({"10.0.0.3", "10.0.0.7", "::1"}));
    EXPECT_TRUE(recs[0]["addresses"].empty());
}

TEST(Cli, DiscoverPublishedOnlyAndPlmnFile) {
    const auto pub = cli("discover --mcc 232 --mnc 00-10 --published-only --stub-resolver " + testdata("stub_resolver.json"));
    ASSERT_EQ(pub.code, 0);
    EXPECT_EQ(lines(pub.out).size(), 3u);
    const auto file = cli("discover --plmn-file " + testdata("plmns.csv") + " --stub-resolver " + testdata("stub_resolver.json"));
    ASSERT_EQ(file.code, 0);
    EXPECT_EQ(lines(file.out).size(), 3u);
}

TEST(Cli, DiscoverReproducibleWithFixedTime) {
    const std::string args = "--fixed-time 2024-02-13T09:30:00Z discover --mcc 232 --mnc 00-10 --stub-resolver " +
                             testdata("stub_resolver.json");
    const auto a = cli(args);
    const auto b = cli(args);
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(lines(a.out)[0]["resolved_at"], "2024-02-13T09:30:00.000Z");
}

TEST(Cli, ResolverUnavailableExitCode) {
    EXPECT_EQ(cli("discover --mcc 232 --mnc 01 --stub-resolver " + testdata("stub_unavailable.json")).code, 2);
}

TEST(Cli, PublicTargetRefusedWithoutAuthorization) {
    TempDir dir;
    write(dir.file("t.jsonl"), R"({"plmn":"232-01","fqdn":"x","addresses":["8.8.8.8"],"resolved_at":"2024-02-13T09:30:00.000Z","schema_version":1})"
                               "\n");
    const auto r = cli("--timeout-ms 100 scan --targets " + dir.file("t.jsonl"));
    EXPECT_EQ(r.code, 4);
    EXPECT_TRUE(r.out.empty());
}

TEST(Cli, StrictUnreachable) {
    TempDir dir;
    write(dir.file("t.jsonl"), R"({"plmn":"232-02","fqdn":"x","addresses":[],"resolved_at":"2024-02-13T09:30:00.000Z","schema_version":1})"
                               "\n");
    EXPECT_EQ(cli("scan --targets " + dir.file("t.jsonl")).code, 0);
    EXPECT_EQ(cli("scan --strict --targets " + dir.file("t.jsonl")).code, 3);
}

TEST(Cli, ScanAgainstMockFleet) {
    epdg::cli::MockFleetSpec spec;
    epdg::cli::MockOperator op;
    op.plmn = epdg::discovery::PlmnId("999", "01");
    op.policy.supported_groups = {2, 14};
    spec.operators.push_back(op);
    epdg::cli::MockFleet fleet(spec);
    fleet.start();
    TempDir dir;
    {
        std::ofstream out(dir.file("t.jsonl"));
        for (const auto& t : fleet.targets()) out << epdg::discovery::to_json(t).dump() << "\n";
    }
    const auto survey = cli("--delay-ms 0 --timeout-ms 500 scan --groups 1,2,14 --targets " + dir.file("t.jsonl"));
    ASSERT_EQ(survey.code, 0);
    EXPECT_FALSE(lines(survey.out).empty());
    const auto keys = cli("--delay-ms 0 --timeout-ms 500 scan --mode collect-keys -n 5 --group 14 --targets " +
                          dir.file("t.jsonl"));
    ASSERT_EQ(keys.code, 0);
    std::size_t observations = 0;
    for (const auto& j : lines(keys.out)) observations += j.value("type", "") == "key_observation";
    EXPECT_EQ(observations, 5u);
    fleet.stop();
}

TEST(Cli, SimulateScenarios) {
    const auto sw = cli("simulate " + data("scenarios/invalid_ke_switch.json"));
    ASSERT_EQ(sw.code, 0);
    const auto j = json::parse(sw.out);
    EXPECT_EQ(j["negotiated_group"], 2);

    const auto text = cli("simulate --render " + data("scenarios/invalid_ke_switch.json"));
    EXPECT_NE(text.out.find("INVALID_KE(USE DH2)"), std::string::npos);

    const auto full = json::parse(cli("simulate " + data("scenarios/full_attack.json")).out);
    EXPECT_EQ(full["layers_compromised"], json({"L1", "L2", "L3"}));
    const auto sip = json::parse(cli("simulate --sip-encryption " + data("scenarios/full_attack.json")).out);
    EXPECT_EQ(sip["layers_compromised"], json({"L1", "L2"}));
}

TEST(Cli, AuditConfig) {
    TempDir dir;
    write(dir.file("r.jsonl"), R"({"vendor": "qualcomm", "operator": "232-01", "rekey_hard_s": 86400})"
                               "\n"
                               R"({"vendor": "x", "dh_groups": [14], "encryption": ["AES_CBC-128"]})"
                               "\n");
    const auto r = cli("audit-config --records " + dir.file("r.jsonl"));
    ASSERT_EQ(r.code, 0);
    const auto recs = lines(r.out);
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_FALSE(recs[0]["flags"].empty());
    EXPECT_TRUE(recs[1]["flags"].empty());
    EXPECT_EQ(lines(cli("audit-config --summary-only --records " + dir.file("r.jsonl")).out).size(), 1u);
    write(dir.file("bad.jsonl"), R"({"vendor": "x", "encryption": ["ROT13"]})"
                                 "\n");
    EXPECT_EQ(cli("audit-config --records " + dir.file("bad.jsonl")).code, 1);
}

TEST(Cli, AnalyzeBlacklistFixture) {
    const auto r = cli("analyze --observations " + testdata("blacklist_match.jsonl"));
    ASSERT_EQ(r.code, 0);
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["blacklist_entries"], 49);
    EXPECT_EQ(j["blacklist_matches"].size(), 1u);
}

TEST(Cli, MockFleetEmitsTargets) {
    TempDir dir;
    const auto r = cli("mock-fleet --duration-s 0.3 --emit-targets " + dir.file("t.jsonl") + " " +
                       data("fleets/cross_group.json"));
    EXPECT_EQ(r.code, 0);
    std::ifstream in(dir.file("t.jsonl"));
    std::stringstream ss;
    ss << in.rdbuf();
    const auto recs = lines(ss.str());
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0]["addresses"], json({"127.0.0.1"}));
    EXPECT_GT(recs[0]["port"].get<int>(), 0);
}

TEST(Cli, BadArgumentsFail) {
    EXPECT_NE(cli("scan").code, 0);
    EXPECT_NE(cli("scan --mode bogus --targets x").code, 0);
}

}  // namespace
