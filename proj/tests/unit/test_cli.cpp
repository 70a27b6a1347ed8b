#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "support/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CMG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTinyIni = R"([data]
num_videos = 6
frames_per_video = 6
captions_per_video = 2
[meta]
steps = 5
batch_size = 4
[localizer]
steps = 5
hidden = 8
[prep]
key_frames = 4
[captioner]
proj_dim = 4
meta_dim = 3
word_dim = 4
hidden_dim = 5
node_embed_dim = 4
gat_hidden = 2
gat_heads = 2
graph_dim = 4
transformer_heads = 2
transformer_ff = 6
[train]
epochs = 1
batch_size = 4
[scst]
steps = 1
batch_size = 2
[decode]
max_len = 6
)";

}  // namespace

TEST_CASE("CLI exit codes") {
  const auto dir = cmg::testing::temp_dir("cli_codes");
  const std::string out = " --out " + dir.string();
  CHECK(run("") == 1);
  CHECK(run("gen-data --no-such-flag") == 1);
  CHECK(run("--meta-features audio gen-data") == 1);
  CHECK(run("build-vocab" + out) == 1);  // no corpus yet: stage dependency
  std::ofstream(dir / "bad.ini") << "[nosuch]\nkey = 1\n";
  CHECK(run("--config " + (dir / "bad.ini").string() + out + " gen-data") == 1);
  CHECK(run("--config " + (dir / "missing.ini").string() + out + " gen-data") == 2);
  CHECK(run("score --captions " + (dir / "none.json").string() + " --data /nonexistent/manifest.json" + out) == 1);
}

TEST_CASE("CLI pipeline end to end") {
  const auto dir = cmg::testing::temp_dir("cli_run");
  std::ofstream(dir / "tiny.ini") << kTinyIni;
  const std::string base = "--config " + (dir / "tiny.ini").string() + " --out " + (dir / "run").string() + " ";
  REQUIRE(run(base + "gen-data") == 0);
  REQUIRE(run(base + "build-vocab") == 0);
  REQUIRE(run(base + "train-meta") == 0);
  REQUIRE(run(base + "export-masks") == 0);
  REQUIRE(run(base + "train-localizer") == 0);
  REQUIRE(run(base + "train-captioner --loss xe") == 0);
  CHECK(run(base + "train-captioner --loss sgd") == 1);
  REQUIRE(run(base + "generate --beam 1") == 0);
  const auto greedy = nlohmann::json::parse(std::ifstream(dir / "run" / "captions.json"));
  CHECK(greedy.size() == 6);
  REQUIRE(run(base + "score") == 0);
  const auto scores = nlohmann::json::parse(std::ifstream(dir / "run" / "scores.json"));
  for (const char* k : {"bleu1", "bleu2", "bleu3", "bleu4", "rougeL", "cider"}) CHECK(scores.contains(k));
  CHECK(fs::exists(dir / "run" / "config.ini"));

  std::ofstream(dir / "run" / "broken.json") << "{not json";
  CHECK(run(base + "score --captions " + (dir / "run" / "broken.json").string()) == 2);

  // the echoed config is picked up when --config is omitted
  REQUIRE(run("--out " + (dir / "run").string() + " --knn-j 2 generate --split held-out") == 0);
  std::ifstream echoed(dir / "run" / "config.ini");
  std::string text((std::istreambuf_iterator<char>(echoed)), std::istreambuf_iterator<char>());
  CHECK(text.find("knn_j=2") != std::string::npos);
  CHECK(text.find("proj_dim=4") != std::string::npos);
}
