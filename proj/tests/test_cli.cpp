#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "cvit/config.hpp"

namespace fs = std::filesystem;
using namespace cvit;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run(const std::string& args)
{
    const std::string cmd = std::string(CVIT_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, ""};
    std::string out;
    std::array<char, 4096> buf;
    while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s)
{
    std::ofstream(p, std::ios::binary) << s;
}

std::size_t count(const std::string& hay, const std::string& needle)
{
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir = fs::temp_directory_path() / ("cvit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    fs::path dir;
};

}  // namespace

TEST(ConfigParse, MinimalSmallPreset)
{
    const auto cfg = parse_config_text("model = cvit\npreset = S\ndata_path = d.bin\n");
    EXPECT_EQ(cfg.model.epsilon, 1e5);
    const auto spec = cfg.model.to_spec(96, 192, 2);
    EXPECT_EQ(spec.depth, 5u);
    EXPECT_EQ(spec.embed, 384u);
    EXPECT_EQ(spec.heads, 6u);
    EXPECT_EQ(spec.mlp_width, 384u);
    EXPECT_EQ(spec.patch_h, 8u);
    EXPECT_EQ(cfg.train.queries, 1024u);
    EXPECT_EQ(cfg.train.batch_size, 64u);
}

TEST(ConfigParse, OneDimensionalDataUsesRowPatches)
{
    const auto cfg = parse_config_text("model=cvit\npreset=T\ngrid_nx=200\ngrid_ny=1\ndata_path=x\n");
    const auto spec = cfg.model.to_spec(1, 200, 1);
    EXPECT_EQ(spec.patch_h, 1u);
    EXPECT_EQ(spec.patch_w, 8u);
    EXPECT_EQ(spec.spatial_tokens(), 25u);
}

TEST(ConfigParse, ErrorsCiteLine)
{
    auto message = [](const std::string& text) {
        try {
            parse_config_text(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message("model = cvit\n# c\nbogus_key = 1\ndata_path = x\n").find("line 3"), std::string::npos);
    EXPECT_NE(message("model = cvit\nsteps = ten\ndata_path = x\n").find("line 2"), std::string::npos);
    EXPECT_NE(message("model = cvit\nsteps = 10\nsteps = 10\ndata_path = x\n").find("line 3"), std::string::npos);
    EXPECT_NE(message("model = cvit\n").find("data_path"), std::string::npos);
    EXPECT_NE(message("data_path = x\nmodel cvit\n").find("line 2"), std::string::npos);
    EXPECT_NE(message("model = fno\ndata_path = x\n").find("fno"), std::string::npos);
    EXPECT_NE(message("model = cvit\npreset = Q\ndata_path = x\n").find("preset"), std::string::npos);
}

TEST(ConfigParse, EchoRoundTrips)
{
    const auto cfg = parse_config_text("model = cvit\npeak_lr = 3e-4\nseed = 7\ndata_path = a b.bin\n");
    const auto again = parse_config_text(cfg.echo());
    EXPECT_EQ(again.echo(), cfg.echo());
    EXPECT_EQ(again.train.peak_lr, 3e-4);
    EXPECT_EQ(again.data_path, "a b.bin");
}

TEST_F(Cli, VerifyFnoEquivalence)
{
    const auto r = run("verify fno-equivalence --grid 64 --modes 8 --trials 20");
    EXPECT_EQ(r.code, 0) << r.out;
    std::smatch m;
    ASSERT_TRUE(std::regex_search(r.out, m, std::regex("discrepancy ([0-9.e+-]+)"))) << r.out;
    EXPECT_LT(std::stod(m[1].str()), 1e-8);
}

TEST_F(Cli, VerifyGradients)
{
    const auto r = run("verify gradients --trials 3");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_GE(count(r.out, " ok "), 21u) << r.out;
    EXPECT_EQ(count(r.out, "FAIL"), 0u);
}

TEST_F(Cli, GenerateThenIdentityBaseline)
{
    auto g = run("generate --task advection --n 10 --grid 200 --tau 3 --d 2 --t 0.5 --c 1 --seed 4 --out " + path("d.bin"));
    ASSERT_EQ(g.code, 0) << g.out;
    auto e = run("eval --baseline identity --data " + path("d.bin") + " --out " + path("m.csv"));
    ASSERT_EQ(e.code, 0) << e.out;
    std::istringstream csv(slurp(path("m.csv")));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "sample_id,rel_l2,tv");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        if (line[0] == '#') continue;
        ++rows;
        const auto a = line.find(','), b = line.rfind(',');
        EXPECT_TRUE(std::isfinite(std::stod(line.substr(a + 1, b - a - 1))));
        EXPECT_TRUE(std::isfinite(std::stod(line.substr(b + 1))));
    }
    EXPECT_EQ(rows, 10u);
    // two half-period steps return to u0
    auto e2 = run("eval --baseline identity --rollout 2 --data " + path("d.bin") + " --out " + path("m2.csv"));
    ASSERT_EQ(e2.code, 0) << e2.out;
    EXPECT_NE(slurp(path("m2.csv")).find("# mean=0, median=0, worst=0"), std::string::npos);
}

TEST_F(Cli, GenerateIsBitReproducible)
{
    const std::string args = "generate --n 20 --seed 11 --out ";
    ASSERT_EQ(run(args + path("a.bin")).code, 0);
    ASSERT_EQ(run(args + path("b.bin")).code, 0);
    ASSERT_EQ(run("generate --n 20 --seed 12 --out " + path("c.bin")).code, 0);
    EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
    EXPECT_NE(slurp(path("a.bin")), slurp(path("c.bin")));
}

TEST_F(Cli, PlotProfileHasOnePolylinePerSeries)
{
    std::ostringstream csv;
    csv << "x,u0,target\n";
    for (int m = 0; m < 200; ++m) csv << m / 200.0 << ',' << (m < 50 ? 1 : -1) << ',' << (m < 150 ? -1 : 1) << '\n';
    spit(path("p.csv"), csv.str());
    const auto r = run("plot --csv " + path("p.csv") + " --out " + path("p.svg") + " --title 'profile & co'");
    ASSERT_EQ(r.code, 0) << r.out;
    const auto svg = slurp(path("p.svg"));
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_EQ(count(svg, "<polyline"), 2u);
    EXPECT_NE(svg.find("profile &amp; co"), std::string::npos);
    const auto first = svg.find("points=\"");
    const auto pts = svg.substr(first + 8, svg.find('"', first + 8) - first - 8);
    EXPECT_EQ(count(pts, ","), 200u);
}

TEST_F(Cli, PlotFieldIsHeatmap)
{
    std::ostringstream csv;
    csv << "y1,y2,pred0\n";
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) csv << i / 4.0 << ',' << j / 3.0 << ',' << i * j << '\n';
    spit(path("h.csv"), csv.str());
    ASSERT_EQ(run("plot --csv " + path("h.csv") + " --out " + path("h.svg")).code, 0);
    const auto svg = slurp(path("h.svg"));
    EXPECT_EQ(count(svg, "<polyline"), 0u);
    EXPECT_GE(count(svg, "<rect"), 12u);
}

TEST_F(Cli, ExitCodes)
{
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("generate --n 3").code, 1);
    EXPECT_EQ(run("verify").code, 1);
    EXPECT_EQ(run("verify fno-equivalence --grid 8 --modes 9").code, 1);
    EXPECT_EQ(run("generate --n 3 --c 0.123 --out " + path("x.bin")).code, 1);
    EXPECT_FALSE(fs::exists(path("x.bin")));
    EXPECT_EQ(run("generate --n 3 --c 0.123 --bandlimited --out " + path("x.bin")).code, 0);
    EXPECT_EQ(run("eval --baseline identity --data " + path("missing.bin") + " --out " + path("m.csv")).code, 2);
    EXPECT_FALSE(fs::exists(path("m.csv")));
    spit(path("bad.bin"), "CVDX garbage");
    EXPECT_EQ(run("eval --baseline identity --data " + path("bad.bin") + " --out " + path("m.csv")).code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, UnknownConfigKeyIsUsageError)
{
    spit(path("c.cfg"), "model = cvit\ndata_path = x.bin\nbogus_key = 1\n");
    const auto r = run("train --config " + path("c.cfg"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("line 3"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainEvalPredictPipeline)
{
    ASSERT_EQ(run("generate --n 40 --grid 32 --t 0.25 --seed 1 --out " + path("train.bin")).code, 0);
    ASSERT_EQ(run("generate --n 8 --grid 32 --t 0.25 --seed 2 --out " + path("test.bin")).code, 0);
    spit(path("t.cfg"), "# tiny\nmodel = cvit\npreset = T\npatch_size = 8\ngrid_nx = 32\ngrid_ny = 1\ngrid_dim = 16\n"
                        "batch_size = 8\nqueries = 16\nsteps = 40\nwarmup = 10\ncheckpoint_every = 20\n"
                        "data_path = " + path("train.bin") + "\ncheckpoint_dir = " + path("ck") + "\n");
    const auto t = run("train --config " + path("t.cfg") + " --log-every 10 --inject-nan 25");
    ASSERT_EQ(t.code, 0) << t.out;
    EXPECT_NE(t.out.find("epsilon = 100000"), std::string::npos) << t.out;
    EXPECT_NE(t.out.find("resumed at step 20"), std::string::npos) << t.out;
    EXPECT_NE(t.out.find("1 restarts"), std::string::npos) << t.out;
    EXPECT_TRUE(fs::exists(path("ck/latest.cvc")));
    const auto loss = slurp(path("ck/loss.csv"));
    EXPECT_EQ(count(loss, "\n"), 41u);
    EXPECT_EQ(loss.find("nan"), std::string::npos);

    const auto e = run("eval --checkpoint " + path("ck/final.cvc") + " --data " + path("test.bin") + " --out " + path("m.csv"));
    ASSERT_EQ(e.code, 0) << e.out;
    EXPECT_NE(slurp(path("m.csv")).find("# mean="), std::string::npos);

    const auto p = run("predict --checkpoint " + path("ck/final.cvc") + " --input " + path("test.bin") + " --sample 3 --out " + path("p.csv"));
    ASSERT_EQ(p.code, 0) << p.out;
    const auto pred = slurp(path("p.csv"));
    EXPECT_EQ(pred.rfind("y1,y2,pred0,truth0\n", 0), 0u);
    EXPECT_EQ(count(pred, "\n"), 33u);

    spit(path("q.csv"), "0.1\n0.55,0\n");
    const auto pq = run("predict --checkpoint " + path("ck/final.cvc") + " --input " + path("test.bin") + " --queries " + path("q.csv") + " --out " + path("pq.csv"));
    ASSERT_EQ(pq.code, 0) << pq.out;
    EXPECT_EQ(count(slurp(path("pq.csv")), "\n"), 3u);
    EXPECT_EQ(run("plot --csv " + path("p.csv") + " --out " + path("p.svg")).code, 0);
    EXPECT_EQ(count(slurp(path("p.svg")), "<polyline"), 2u);

    spit(path("bad_q.csv"), "1.5\n");
    EXPECT_EQ(run("predict --checkpoint " + path("ck/final.cvc") + " --input " + path("test.bin") + " --queries " + path("bad_q.csv") + " --out " + path("x.csv")).code, 1);
    EXPECT_FALSE(fs::exists(path("x.csv")));

    // same seed, same training trajectory
    const auto t2 = run("train --config " + path("t.cfg") + " --log-every 10 --inject-nan 25");
    ASSERT_EQ(t2.code, 0);
    EXPECT_EQ(slurp(path("ck/loss.csv")), loss);
}
