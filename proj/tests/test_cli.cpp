#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = URAFLB_CLI_PATH;
const std::string kScn = URAFLB_SCENARIO_DIR;

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("uraflb_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliRun run(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const fs::path o = scratch() / ("out" + std::to_string(counter) + ".txt");
    const fs::path e = scratch() / ("err" + std::to_string(counter++) + ".txt");
    const std::string cmd = env + " " + kCli + " " + args + " > " + o.string() + " 2> " + e.string();
    const int st = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

int line_count(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST(Cli, HelpExitsCleanly) {
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("").code, 1);
}

TEST(Cli, KaErrorBoundTable) {
    const CliRun r = run("ka-error-bound --scenario " + kScn + "/ka_estimation.scn --samples 40");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_line(r.out), "ka,ka_prime,bound,se,p_prime,k_tilde");
    EXPECT_EQ(line_count(r.out), 1 + 20);
}

TEST(Cli, SelectedCountsAndAsymptotics) {
    const CliRun r = run("ka-error-asym --scenario " + kScn + "/ka_estimation.scn --samples 40 --ka-prime 8,12");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_line(r.out), "ka,ka_prime,asym_p,asym_p_se,asym_n");
    EXPECT_EQ(line_count(r.out), 3);
}

TEST(Cli, DeterministicAcrossRunsAndThreads) {
    const std::string args = "ka-error-bound --scenario " + kScn + "/ka_estimation.scn --samples 60 --seed 5";
    const CliRun a = run(args, "URAFLB_THREADS=1");
    const CliRun b = run(args, "URAFLB_THREADS=1");
    const CliRun c = run(args, "URAFLB_THREADS=2");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.out, c.out);
    const CliRun d = run("ka-error-bound --scenario " + kScn + "/ka_estimation.scn --samples 60 --seed 6");
    EXPECT_NE(a.out, d.out);
}

TEST(Cli, ConfigErrors) {
    const fs::path bad = scratch() / "bad.scn";
    std::ofstream(bad) << "n = 10\nL = 2\nwidth = 3\n";
    const CliRun r = run("converse --scenario " + bad.string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("unknown key"), std::string::npos);
    EXPECT_EQ(run("converse --scenario /nonexistent/x.scn").code, 1);
    EXPECT_EQ(run("achievability --scenario " + kScn + "/reduced.scn").code, 1);  // no power given
    EXPECT_EQ(run("min-ebno --scenario " + kScn + "/fig2.scn").code, 1);         // needs --paper-scale
    EXPECT_EQ(run("bogus --scenario " + kScn + "/tiny.scn").code, 1);
    const fs::path sph = scratch() / "sph.scn";
    std::ofstream(sph) << "n = 10\nK = 2\nka_dist = fixed(1)\np_prime_ratio = 0.5\n";
    EXPECT_EQ(run("converse --scenario " + sph.string()).code, 1);
}

TEST(Cli, InfeasibleExitCodeAndSummary) {
    const fs::path out = scratch() / "ach.csv";
    const CliRun r = run("achievability --scenario " + kScn + "/tiny.scn --samples 32 --out " + out.string());
    EXPECT_EQ(r.code, 2) << r.err;
    const std::string csv = slurp(out);
    EXPECT_EQ(first_line(csv), "mean_ka,p_db,eb_db,r_prime,eps_md,eps_md_se,eps_fa,eps_fa_se,p0,feasible");
    const std::string js = slurp(out.string() + ".json");
    EXPECT_NE(js.find("\"exit_code\": 2"), std::string::npos);
    EXPECT_NE(js.find("\"command\": \"achievability\""), std::string::npos);
    EXPECT_NE(js.find("\"wall_time_s\""), std::string::npos);
}

TEST(Cli, ConverseTable) {
    const CliRun r = run("converse --scenario " + kScn + "/reduced.scn --samples 50");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_line(r.out), "mean_ka,eb_db,theorem,theorem_3_db,theorem_4_db,theorem_5_db,p_star,feasible");
}

TEST(Cli, SimulateModes) {
    const CliRun d = run("simulate --scenario " + kScn + "/tiny.scn --trials 100");
    ASSERT_EQ(d.code, 0) << d.err;
    EXPECT_EQ(first_line(d.out), "mean_ka,p_db,eb_db,trials,md,md_se,fa,fa_se,k_l,k_u,r_prime");
    const CliRun e = run("simulate --scenario " + kScn + "/ka_estimation.scn --mode estimate --trials 200");
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(first_line(e.out), "ka,ka_hat,freq,se,trials");
    EXPECT_EQ(run("simulate --scenario " + kScn + "/tiny.scn --mode guess").code, 1);
}

TEST(Cli, SweepKeepsOrder) {
    const CliRun r = run("sweep --scenario " + kScn + "/ka_estimation.scn --samples 40 --axis L --values 16,4,8 "
                      "--command ka-error-bound --ka-prime 12");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("L,", 0), 0u);
    std::vector<std::string> axis;
    while (std::getline(in, line)) axis.push_back(line.substr(0, line.find(',')));
    EXPECT_EQ(axis, (std::vector<std::string>{"16", "4", "8"}));
    EXPECT_EQ(run("sweep --scenario " + kScn + "/reduced.scn --axis P_db --values 0 --command converse").code, 1);
}
