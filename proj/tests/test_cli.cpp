// Runs the objmodel executable and checks exit codes and outputs.
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using objmodel::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult cli(const std::string& args, const TempDir& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(OBJMODEL_CLI) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir("cli_usage");
  EXPECT_EQ(cli("--help", dir).code, 0);
  EXPECT_EQ(cli("", dir).code, 2);
  EXPECT_EQ(cli("fly", dir).code, 2);
  EXPECT_EQ(cli("track --work " + (dir / "w").string(), dir).code, 2);  // --sequence missing

  const CliResult missing = cli("track --sequence " + (dir / "none.txt").string() + " --work " + (dir / "w").string(), dir);
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("error: stage=track kind=usage"), std::string::npos) << missing.err;

  EXPECT_EQ(cli("segment --work " + (dir / "nothing").string(), dir).code, 2);
  EXPECT_EQ(cli("merge --sessions " + (dir / "a.cloud").string() + " --out " + (dir / "m.cloud").string(), dir).code, 2);
  EXPECT_EQ(cli("segment --work " + dir.path().string() + " --mode sideways", dir).code, 2);
}

TEST(Cli, FullSessionThroughSubcommands) {
  TempDir dir("cli_full");
  std::ofstream(dir / "scene.txt") << "object = box\norbit.count = 8\norbit.arc_deg = 20\ncamera.width = 320\n"
                                      "camera.height = 240\nseed = 2\n";
  const std::string seq = (dir / "seq").string(), work = (dir / "work").string();
  ASSERT_EQ(cli("synth --scene " + (dir / "scene.txt").string() + " --out " + seq, dir).code, 0);
  ASSERT_EQ(cli("track --sequence " + seq + "/manifest.txt --work " + work, dir).code, 0);

  const CliResult bad_key = cli("segment --work " + work + " --set tracker.nonsense=1", dir);
  EXPECT_EQ(bad_key.code, 2);
  EXPECT_NE(bad_key.err.find("kind=config"), std::string::npos);

  const CliResult bad_value = cli("refine --work " + work + " --set tracker.inlier_threshold_m=-1", dir);
  EXPECT_EQ(bad_value.code, 2);

  // refine before segment: missing prerequisite is a stage failure
  const CliResult early = cli("refine --work " + work, dir);
  EXPECT_EQ(early.code, 1);
  EXPECT_NE(early.err.find("error: stage=refine kind=stage"), std::string::npos) << early.err;

  EXPECT_EQ(cli("segment --work " + work + " --select 5", dir).code, 1);
  ASSERT_EQ(cli("segment --work " + work, dir).code, 0);
  ASSERT_EQ(cli("refine --work " + work + " --iterations 20", dir).code, 0);
  ASSERT_EQ(cli("postprocess --work " + work + " --fusion-radius 0.003", dir).code, 0);
  // tracker settings differ from the recorded track stage
  EXPECT_EQ(cli("postprocess --work " + work + " --set tracker.patch=9", dir).code, 2);

  ASSERT_EQ(cli("export --work " + work + " --out " + (dir / "bundle").string(), dir).code, 0);
  EXPECT_TRUE(fs::exists(dir / "bundle/fused.cloud"));

  const std::string report = (dir / "report.txt").string();
  ASSERT_EQ(cli("eval --cloud " + work + "/postprocess/fused.cloud --mesh " + seq + "/mesh.obj --groundtruth " + seq +
                    "/groundtruth.txt --report " + report,
                dir)
                .code,
            0);
  std::ifstream in(report);
  std::string header;
  std::getline(in, header);
  double mean = -1;
  in >> mean;
  EXPECT_GT(mean, 0.0);
  EXPECT_LT(mean, 2.5);

  // the same partial model twice merges trivially
  const std::string cloud = work + "/postprocess/fused.cloud";
  EXPECT_EQ(cli("merge --sessions " + cloud + " " + cloud + " --out " + (dir / "m.cloud").string() + " --report " +
                    (dir / "m.txt").string(),
                dir)
                .code,
            0);
  EXPECT_TRUE(fs::exists(dir / "m.txt"));
}
