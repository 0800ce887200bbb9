#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "specalign/csv_io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "specalign_cli_tests";

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + SPECALIGN_CLI + " " + args + " > " + (kWork / "stdout.txt").string() +
                            " 2> " + (kWork / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string out(const std::string& name) { return (kWork / name).string(); }

/// Rows of a CSV (comments and header dropped) split on commas.
std::vector<std::vector<std::string>> rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> r;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        r.push_back(cells);
    }
    return r;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
    }
};

} // namespace

TEST_F(Cli, AlignCircleStartsAtN) {
    ASSERT_EQ(run("align --generator circle --labeling major_axis --shuffle --out " + out("align")), 0);
    const auto curve = specalign::read_curve_csv(out("align/curve.csv"));
    EXPECT_EQ(curve.thresholds.front(), 0.0);
    EXPECT_NEAR(curve.values.front(), 100.0, 1e-9);
    const auto summary = rows(out("align/summary.csv"));
    ASSERT_EQ(summary.size(), 2u);
    EXPECT_LT(std::stod(summary[1][6]), std::stod(summary[0][6])); // gini
    EXPECT_EQ(rows(out("align/projections.csv")).size(), 2u);
    EXPECT_TRUE(fs::exists(out("align/align.gp")));
    EXPECT_EQ(slurp(out("align/curve.csv")).rfind("# command=align", 0), 0u);
}

TEST_F(Cli, MissingInputFails) {
    EXPECT_NE(run("align --input " + out("does_not_exist.csv") + " --out " + out("missing")), 0);
    EXPECT_NE(slurp(kWork / "stderr.txt").find("does not exist"), std::string::npos);
    EXPECT_EQ(run("align --out " + out("nodata")), 2);
    EXPECT_NE(run("frobnicate"), 0);
}

TEST_F(Cli, AlignReadsCsvInput) {
    std::ofstream(out("data.csv")) << "x1,x2,y\n1,0,1\n0,2,-1\n1,1,1\n";
    ASSERT_EQ(run("align --input " + out("data.csv") + " --label y --out " + out("csv_in")), 0);
    EXPECT_NEAR(specalign::read_curve_csv(out("csv_in/curve.csv")).values.front(), 3.0, 1e-12);
    std::ofstream(out("bad.csv")) << "x1,x2,y\n1,0,1\n0,oops,-1\n";
    EXPECT_EQ(run("align --input " + out("bad.csv") + " --label y --out " + out("csv_bad")), 1);
    EXPECT_NE(slurp(kWork / "stderr.txt").find("line 3"), std::string::npos);
}

TEST_F(Cli, GdSelfChecksPass) {
    ASSERT_EQ(run("gd --generator peaks --n 300 --iters 200 --out " + out("gd")), 0);
    for (const auto& r : rows(out("gd/closed_form_labels.csv"))) EXPECT_LT(std::stod(r[5]), 1e-8);
    const auto bounds = rows(out("gd/bounds_labels.csv"));
    EXPECT_EQ(bounds.size(), 4u);
    for (const auto& r : bounds) EXPECT_EQ(r[5], "true");
    const std::string manifest = slurp(out("gd/manifest.txt"));
    EXPECT_NE(manifest.find("meta.check.closed_form_matches_iterative=pass"), std::string::npos);
}

TEST_F(Cli, GdRejectsLargeStep) {
    EXPECT_EQ(run("gd --generator circle --eta 1 --out " + out("gd_bad")), 3);
}

TEST_F(Cli, GdMixesCross) {
    ASSERT_EQ(run("gd --generator peaks --n 1000 --iters 300 --mix '9:1;4:0.9,49:0.435' --out " + out("gd_mix")), 0);
    const auto r = rows(out("gd_mix/crossing.csv"));
    ASSERT_GT(r.size(), 3u);
    EXPECT_GT(std::stod(r[1][1]), std::stod(r[1][2]));
    EXPECT_LT(std::stod(r.back()[1]), std::stod(r.back()[2]));
}

TEST_F(Cli, TrainEmitsCurvesPerLayer) {
    ASSERT_EQ(run("train --generator peaks --n 200 --depth 3 --width 16 --epochs 3 --out " + out("train")), 0);
    for (const char* phase : {"before", "after"})
        for (int layer = 0; layer <= 3; ++layer)
            EXPECT_TRUE(fs::exists(out("train/curve_" + std::string(phase) + "_layer" + std::to_string(layer) + ".csv")));
    EXPECT_FALSE(fs::exists(out("train/curve_after_layer4.csv")));
    EXPECT_EQ(rows(out("train/loss_history.csv")).size(), 4u);
    EXPECT_NE(slurp(out("train/manifest.txt")).find("check.checkpoint_roundtrip=pass"), std::string::npos);
}

TEST_F(Cli, ConfigFileAndPrecedence) {
    std::ofstream(out("cfg.txt")) << "# settings\ncommand=align\ngenerator=circle\nn-per-class=10\nseed=3\n";
    ASSERT_EQ(run("align --config " + out("cfg.txt") + " --seed 4 --out " + out("cfg_run")), 0);
    const std::string m = slurp(out("cfg_run/manifest.txt"));
    EXPECT_NE(m.find("n-per-class=10"), std::string::npos);
    EXPECT_NE(m.find("seed=4"), std::string::npos);
    EXPECT_NEAR(specalign::read_curve_csv(out("cfg_run/curve.csv")).values.front(), 20.0, 1e-12);

    std::ofstream(out("cfg_bad.txt")) << "command=align\nno-such-key=1\n";
    EXPECT_EQ(run("align --config " + out("cfg_bad.txt")), 1);
    std::ofstream(out("cfg_other.txt")) << "command=gd\n";
    EXPECT_EQ(run("align --generator circle --config " + out("cfg_other.txt")), 1);
}

TEST_F(Cli, OutputRootFromEnvironment) {
    ASSERT_EQ(run("align --generator circle", "SPECALIGN_OUTPUT_ROOT=" + out("root")), 0);
    EXPECT_TRUE(fs::exists(out("root/align/curve.csv")));
}

TEST_F(Cli, DiffCurvesAndRepresentations) {
    ASSERT_EQ(run("align --generator circle --out " + out("d_major")), 0);
    ASSERT_EQ(run("align --generator circle --labeling minor_axis --out " + out("d_minor")), 0);
    ASSERT_EQ(run("diff --a " + out("d_major/curve.csv") + " --b " + out("d_minor/curve.csv") + " --out " + out("diff")), 0);
    const auto d = specalign::read_curve_csv(out("diff/diff.csv"));
    EXPECT_NEAR(d.values.front(), 0.0, 1e-12);

    std::ofstream(out("rep_a.csv")) << "f1,f2\n1,0\n0,1\n1,1\n";
    std::ofstream(out("rep_b.csv")) << "f1\n1\n1\n1\n";
    std::ofstream(out("labels.csv")) << "label\n1\n-1\n0\n";
    ASSERT_EQ(run("diff --rep-a " + out("rep_a.csv") + " --rep-b " + out("rep_b.csv") + " --labels " +
                  out("labels.csv") + " --out " + out("diff_rep")),
              0);
    EXPECT_TRUE(fs::exists(out("diff_rep/curve_a.csv")));
    EXPECT_EQ(run("diff --a " + out("d_major/curve.csv") + " --out " + out("diff_bad")), 2);
}

TEST_F(Cli, PeaksRerunFromManifestIsByteIdentical) {
    const std::string args = "peaks --seeds 0-1 --n-source 300 --n-target 40 --n-test 80 --epochs 2 "
                             "--target-iters 30 --record-every 5 --jobs 2 --out ";
    ASSERT_EQ(run(args + out("peaks_a")), 0);
    int curves = 0;
    for (const auto& e : fs::directory_iterator(out("peaks_a/seed0")))
        curves += e.path().filename().string().rfind("curve_", 0) == 0;
    EXPECT_GE(curves, 9);
    ASSERT_EQ(run("peaks --config " + out("peaks_a/manifest.txt") + " --jobs 1 --out " + out("peaks_b")), 0);
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(out("peaks_a"))) {
        if (e.path().extension() != ".csv") continue;
        const auto rel = fs::relative(e.path(), out("peaks_a"));
        EXPECT_EQ(slurp(e.path()), slurp(fs::path(out("peaks_b")) / rel)) << rel;
        ++compared;
    }
    EXPECT_GT(compared, 40u);
}
