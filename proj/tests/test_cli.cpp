// Runs the tcattn binary and checks outputs, golden files and exit codes.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "golden.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "",
        const std::string& redirect = "2>/dev/null") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" TCATTN_CLI "' " + args + " " + redirect;
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

Run run_stderr(const std::string& args) {
  return run(args, "", "2>&1 1>/dev/null");
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() /
                   ("tcattn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kWorked = R"('{"prefix_len":4,"num_frames":2,"tokens_per_frame":4,"suffix_len":3}')";

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run("").status, 2); }

TEST(Cli, UnknownCommandAndFlagAreUsageErrors) {
  EXPECT_EQ(run("frobnicate").status, 2);
  EXPECT_EQ(run("selftest --bogus").status, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").status, 0); }

TEST(RenderMask, CausalPureTextPgm) {
  const auto dir = scratch();
  const auto r = run("render-mask --layout '{\"prefix_len\":3}' --kind causal --out " + (dir / "m.pgm").string());
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "allowed_count=6\n");
  EXPECT_EQ(slurp(dir / "m.pgm"), slurp(fixture_path("mask_causal_t3.pgm")));
}

TEST(RenderMask, FwBlockCausalGoldenPgmAndCsv) {
  const auto dir = scratch();
  const std::string layout = R"('{"prefix_len":1,"num_frames":2,"tokens_per_frame":2,"suffix_len":1}')";
  auto r = run("render-mask --layout " + layout + " --kind fw_block_causal --out " + (dir / "m.pgm").string());
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "allowed_count=23\n");
  EXPECT_EQ(slurp(dir / "m.pgm"), slurp(fixture_path("mask_fwbc_1_2x2_1.pgm")));
  r = run("render-mask --layout " + layout + " --kind fw_block_causal --out " + (dir / "m.csv").string());
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(slurp(dir / "m.csv"), "1,0,0,0,0,0\n1,1,1,0,0,0\n1,1,1,0,0,0\n1,1,1,1,1,0\n1,1,1,1,1,0\n1,1,1,1,1,1\n");
}

TEST(RenderMask, LayoutFromFileAndDefaultOutDir) {
  const auto dir = scratch();
  std::ofstream(dir / "layout.json") << R"({"num_frames":1,"tokens_per_frame":2})";
  const auto r = run("render-mask --layout " + (dir / "layout.json").string() + " --kind full_visual",
                     "TCATTN_OUT_DIR=" + dir.string());
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(slurp(dir / "mask_full_visual.pgm"), "P2\n2 2\n255\n255 255\n255 255\n");
}

TEST(RenderMask, WithinFrameCausalFlag) {
  const auto dir = scratch();
  const auto r = run("render-mask --layout '{\"num_frames\":1,\"tokens_per_frame\":3}' --kind fw_block "
                     "--fw-block-causal-within-frame --out " + (dir / "m.csv").string());
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "allowed_count=6\n");
}

TEST(RenderMask, UnknownKindListsValidKinds) {
  const auto r = run_stderr("render-mask --layout '{\"prefix_len\":3}' --kind fancy --out /tmp/x.pgm");
  EXPECT_EQ(r.status, 2);
  for (const char* k : {"causal", "full_visual", "fw_block", "fw_block_causal"}) {
    EXPECT_NE(r.out.find(k), std::string::npos) << r.out;
  }
}

TEST(RenderMask, BadInputsExitTwo) {
  EXPECT_EQ(run("render-mask --layout '{bad json' --kind causal --out /tmp/x.pgm").status, 2);
  EXPECT_EQ(run("render-mask --layout '{\"prefix_len\":0}' --kind causal --out /tmp/x.pgm").status, 2);
  EXPECT_EQ(run("render-mask --layout '{\"prefix_len\":2}' --kind causal --out /tmp/x.png").status, 2);
  EXPECT_EQ(run("render-mask --kind causal").status, 2);
}

TEST(RenderMask, UnwritableOrUnreadablePathExitsThree) {
  EXPECT_EQ(run("render-mask --layout '{\"prefix_len\":2}' --kind causal --out /nonexistent_dir/m.pgm").status, 3);
  EXPECT_EQ(run("render-mask --layout /nonexistent_dir/layout.json --kind causal --out /tmp/x.pgm").status, 3);
}

TEST(Positions, WorkedLayoutCsv) {
  const auto r = run("positions --layout " + kWorked + " --gamma 1 --csv");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out,
            "n,role,temporal_id,adjusted\n"
            "0,text_prefix,0,0\n1,text_prefix,1,2\n2,text_prefix,2,4\n3,text_prefix,3,6\n"
            "4,visual,4,8\n5,visual,4,9\n6,visual,4,10\n7,visual,4,11\n"
            "8,visual,5,13\n9,visual,5,14\n10,visual,5,15\n11,visual,5,16\n"
            "12,text_suffix,5,17\n13,text_suffix,6,19\n14,text_suffix,7,21\n");
}

TEST(Positions, GammaZeroAdjustedEqualsN) {
  const auto r = run("positions --layout " + kWorked + " --gamma 0 --csv");
  ASSERT_EQ(r.status, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    EXPECT_EQ(line.substr(0, line.find(',')), line.substr(line.rfind(',') + 1));
  }
}

TEST(Positions, EmptyVisualSpanIsIdentity) {
  const auto r = run("positions --layout '{\"prefix_len\":2,\"suffix_len\":2}' --gamma 0.5 --csv");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "n,role,temporal_id,adjusted\n0,text_prefix,0,0\n1,text_prefix,1,1.5\n"
                   "2,text_suffix,2,3\n3,text_suffix,3,4.5\n");
}

TEST(Positions, AlignedTableAndStrictSuffix) {
  const auto r = run("positions --layout " + kWorked + " --strict-monotonic-suffix");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(count_lines(r.out), 16u);
  EXPECT_NE(r.out.find("    12  text_suffix            6"), std::string::npos) << r.out;
}

TEST(Positions, BadGammaExitsTwo) {
  EXPECT_EQ(run("positions --layout " + kWorked + " --gamma abc").status, 2);
  EXPECT_EQ(run("positions --layout " + kWorked + " --gamma inf").status, 2);
  EXPECT_EQ(run("positions --layout " + kWorked + " --gamma nan").status, 2);
}

TEST(Heatmap, SingleTokenIsWhitePixel) {
  const auto dir = scratch();
  const auto r = run("heatmap --config '{\"layout\":{\"prefix_len\":1},\"num_heads\":1,\"d_head\":4}' --out " + dir.string());
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(slurp(dir / "head_0.pgm"), "P2\n1 1\n255\n255\n");
}

TEST(Heatmap, MaskedCellsAreBlackAndGoldenMatches) {
  const auto dir = scratch();
  const std::string cfg = R"('{"layout":{"prefix_len":1,"num_frames":2,"tokens_per_frame":2,"suffix_len":1},)"
                          R"("num_heads":2,"d_head":4,"gamma":1,"mask_kind":"fw_block_causal","pe_mode":"dual_rope"}')";
  const auto r = run("heatmap --config " + cfg + " --seed 7 --csv --out " + dir.string());
  ASSERT_EQ(r.status, 0);
  for (int h = 0; h < 2; ++h) {
    const std::string name = "head_" + std::to_string(h) + ".pgm";
    const std::string pgm = slurp(dir / name);
    expect_golden("heatmap_seed7/" + name, pgm);
    // Forbidden cells of the FwBC mask are exactly black.
    std::istringstream in(pgm);
    std::string magic;
    int w, hgt, maxval;
    in >> magic >> w >> hgt >> maxval;
    const std::string mask = slurp(fixture_path("mask_fwbc_1_2x2_1.pgm"));
    std::istringstream min(mask);
    min >> magic >> w >> hgt >> maxval;
    for (int i = 0; i < 36; ++i) {
      int a, m;
      in >> a;
      min >> m;
      if (m == 0) EXPECT_EQ(a, 0);
    }
    EXPECT_TRUE(fs::exists(dir / ("head_" + std::to_string(h) + ".csv")));
  }
  const auto again = dir / "again";
  ASSERT_EQ(run("heatmap --config " + cfg + " --seed 7 --out " + again.string()).status, 0);
  EXPECT_EQ(slurp(again / "head_0.pgm"), slurp(dir / "head_0.pgm"));
}

TEST(Heatmap, BadConfigExitsTwo) {
  EXPECT_EQ(run("heatmap --config '{\"num_heads\":1}'").status, 2);
  EXPECT_EQ(run("heatmap --config '{\"layout\":{\"prefix_len\":2},\"d_head\":3}'").status, 2);
  EXPECT_EQ(run("heatmap --config '{\"layout\":{\"prefix_len\":2},\"pe_mode\":\"alibi\"}'").status, 2);
}

TEST(Gradcheck, DefaultMicroConfigPasses) {
  const auto r = run("gradcheck");
  ASSERT_EQ(r.status, 0);
  const auto at = r.out.find("attention max_rel_error=");
  ASSERT_NE(at, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(at + 24)), 1e-4);
}

TEST(Sweep, TwoGammasGiveTwoRows) {
  const auto dir = scratch();
  const auto r = run("sweep --gammas 0,1 --steps 5 --out " + (dir / "s.csv").string() + " --json " +
                     (dir / "s.json").string());
  ASSERT_EQ(r.status, 0);
  const std::string csv = slurp(dir / "s.csv");
  EXPECT_EQ(count_lines(csv), 3u);
  EXPECT_NE(r.out.find("direction-of-effect"), std::string::npos);
  EXPECT_NE(slurp(dir / "s.json").find("wall_ms"), std::string::npos);
}

TEST(Sweep, DeterministicAndSerialEqualsParallel) {
  const auto dir = scratch();
  ASSERT_EQ(run("sweep --gammas 0.5,1,2 --steps 5 --out " + (dir / "a.csv").string()).status, 0);
  ASSERT_EQ(run("sweep --gammas 0.5,1,2 --steps 5 --serial --out " + (dir / "b.csv").string()).status, 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(Sweep, BadInputsExitTwo) {
  EXPECT_EQ(run("sweep --gammas 0,x --steps 2 --out /tmp/s.csv").status, 2);
  EXPECT_EQ(run("sweep --config '{\"steps\":0}' --out /tmp/s.csv").status, 2);
  EXPECT_EQ(run("sweep --config '{\"task\":\"vqa\"}' --out /tmp/s.csv").status, 2);
  EXPECT_EQ(run("sweep --gammas 1 --steps 1 --out /nonexistent_dir/s.csv").status, 3);
}

TEST(Grid, WritesCsvSummaryAndJson) {
  const auto dir = scratch();
  const std::string cfg = R"('{"tasks":["moving_count"],"mask_kinds":["causal","fw_block_causal"],)"
                          R"("pe_modes":["rope_only","time_ape"],"seeds":[1,2],"base":{"steps":3}}')";
  const auto r = run("grid --config " + cfg + " --out " + dir.string());
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(count_lines(slurp(dir / "grid.csv")), 9u);
  EXPECT_EQ(count_lines(slurp(dir / "summary.csv")), 5u);
  EXPECT_NE(slurp(dir / "grid.json").find("direction-of-effect"), std::string::npos);
  EXPECT_NE(r.out.find("rank"), std::string::npos);
}

TEST(Grid, BadAxisExitsTwo) {
  EXPECT_EQ(run("grid --config '{\"mask_kinds\":[\"fancy\"]}' --out /tmp/g").status, 2);
  EXPECT_EQ(run("grid --config '{\"seeds\":[]}' --out /tmp/g").status, 2);
  EXPECT_EQ(run("grid --config '[1]' --out /tmp/g").status, 2);
}

TEST(Selftest, CleanBuildExitsZero) {
  const auto r = run("selftest");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("selftest: all checks passed"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
