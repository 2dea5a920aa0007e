#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const std::string kCli = DMT_CLI_PATH;

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "dmt_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int run_cli(const std::string& args, const std::string& capture = "") {
  std::string command = kCli + " " + args;
  command += capture.empty() ? " > /dev/null 2>&1" : " > " + capture + " 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string toy_csv() {
  static const std::string path = [] {
    const std::string out = (work_dir() / "toy.csv").string();
    const int code = run_cli(
        "gen-data --task toy-binary --n 200 --seed 7 --noise 0.1 --labeled-count 16 "
        "--valtiny 16 --out " + out);
    REQUIRE(code == 0);
    return out;
  }();
  return path;
}

const std::string kFastDmt =
    " --set train.iterations=2 --set train.alpha=0.5,1.0 "
    "--set train.epochs_per_iteration=2 --set train.base_epochs=2 "
    "--set model.hidden=8";

}  // namespace

TEST_CASE("gen-data: deterministic output, summary, usage errors") {
  const std::string first = (work_dir() / "gen_a.csv").string();
  const std::string second = (work_dir() / "gen_b.csv").string();
  CHECK(run_cli("gen-data --task toy-binary --n 1000 --seed 7 --out " + first) == 0);
  CHECK(run_cli("gen-data --task toy-binary --n 1000 --seed 7 --out " + second) == 0);
  CHECK(read_all(first) == read_all(second));

  std::ifstream in(first);
  std::string header;
  std::getline(in, header);
  CHECK(header == "f0,f1,label,split");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 1000);

  CHECK(run_cli("gen-data --task toy-binary --n 0 --out " + first) == 2);
  CHECK(run_cli("gen-data --task nope --n 10 --out " + first) == 2);
  CHECK(run_cli("gen-data --task toy-binary --n 10") == 2);  // --out required
}

TEST_CASE("gen-data: grid task writes a loadable pixel CSV") {
  const std::string out = (work_dir() / "grid.csv").string();
  CHECK(run_cli("gen-data --task grid-seg --n 8 --height 8 --width 8 --classes 3 "
                "--labeled-ratio 0.25 --valtiny 1 --seed 3 --out " + out) == 0);
  std::ifstream in(out);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("image,row,col,f0", 0) == 0);
}

TEST_CASE("train: the supervised epoch rule shows up in the metrics CSV") {
  const std::string metrics = (work_dir() / "sup.csv").string();
  const int code = run_cli("train --data " + toy_csv() +
                           " --mode supervised --labeled-ratio 0.125 --base-epochs 30 "
                           "--seed 7 --set model.hidden=8 --out " + metrics);
  CHECK(code == 0);
  const std::string body = read_all(metrics);
  CHECK(body.find("supervised,7,0,epochs,85.000000") != std::string::npos);
}

TEST_CASE("train: identical dmt-cls invocations give byte-identical metrics") {
  const std::string first = (work_dir() / "dmt_a.csv").string();
  const std::string second = (work_dir() / "dmt_b.csv").string();
  const std::string invocation =
      "train --data " + toy_csv() + " --mode dmt-cls --gamma 4 --seed 7" + kFastDmt;
  CHECK(run_cli(invocation + " --out " + first) == 0);
  CHECK(run_cli(invocation + " --out " + second) == 0);
  const std::string body = read_all(first);
  CHECK(!body.empty());
  CHECK(body == read_all(second));
  CHECK(body.find("dmt-cls,7,") != std::string::npos);
}

TEST_CASE("train: online self-training logs threshold and epoch count") {
  const std::string metrics = (work_dir() / "online.csv").string();
  const int code = run_cli("train --data " + toy_csv() +
                           " --mode ablate:online_st --seed 7 --set train.online_epochs=2 "
                           "--set train.base_epochs=2 --set model.hidden=8 --out " + metrics);
  CHECK(code == 0);
  const std::string body = read_all(metrics);
  CHECK(body.find("online_threshold,0.900000") != std::string::npos);
  CHECK(body.find("ablate:online_st,7,1,epochs,2.000000") != std::string::npos);
}

TEST_CASE("train: config file plus --set overrides, unknown keys fail fast") {
  const std::string config = (work_dir() / "run.cfg").string();
  {
    std::ofstream out(config);
    out << "# two quick iterations\n";
    out << "train.iterations = 2\n";
    out << "train.alpha = 0.5,1.0\n";
    out << "train.epochs_per_iteration = 2\n";
    out << "train.base_epochs = 2\n";
    out << "model.hidden = 8\n";
    out << "loss.gamma1 = 5\n";
  }
  const std::string metrics = (work_dir() / "cfg.csv").string();
  CHECK(run_cli("train --data " + toy_csv() + " --mode dmt-cls --seed 3 --config " + config +
                " --out " + metrics) == 0);
  CHECK(read_all(metrics).find("dmt-cls,3,") != std::string::npos);

  CHECK(run_cli("train --data " + toy_csv() + " --mode dmt-cls --set loss.gammaX=1 --out " +
                metrics) == 2);
  CHECK(run_cli("train --data " + toy_csv() + " --mode warp-drive --out " + metrics) == 2);
  CHECK(run_cli("train --mode dmt-cls") == 2);  // --data required
}

TEST_CASE("train: --jobs fans seeds out to disjoint metric files") {
  const std::string metrics = (work_dir() / "fan.csv").string();
  const int code = run_cli("train --data " + toy_csv() +
                           " --mode supervised --seeds 5,6 --jobs 2 "
                           "--set train.base_epochs=2 --set model.hidden=8 --out " + metrics);
  CHECK(code == 0);
  CHECK(fs::exists(work_dir() / "fan.seed5.csv"));
  CHECK(fs::exists(work_dir() / "fan.seed6.csv"));
  CHECK(read_all(work_dir() / "fan.seed5.csv") != read_all(work_dir() / "fan.seed6.csv"));
}

TEST_CASE("checkpoints, analyze-pseudo and eval work end to end") {
  const std::string ckpt_dir = (work_dir() / "ckpts").string();
  const std::string metrics = (work_dir() / "ck.csv").string();
  CHECK(run_cli("train --data " + toy_csv() +
                " --mode supervised --seed 7 --set train.base_epochs=5 "
                "--set model.hidden=8 --save-checkpoints " + ckpt_dir + " --out " + metrics) == 0);
  const std::string model = ckpt_dir + "/iter0.model";
  CHECK(fs::exists(model));

  const std::string noise_a = (work_dir() / "noise_a.csv").string();
  const std::string noise_b = (work_dir() / "noise_b.csv").string();
  CHECK(run_cli("analyze-pseudo --model " + model + " --data " + toy_csv() + " --out " +
                noise_a) == 0);
  CHECK(run_cli("analyze-pseudo --model " + model + " --data " + toy_csv() + " --out " +
                noise_b) == 0);
  const std::string body = read_all(noise_a);
  CHECK(body.rfind("fraction,retained,errors,error_rate\n", 0) == 0);
  CHECK(body.find("\noverall,") != std::string::npos);
  CHECK(body == read_all(noise_b));

  const std::string eval_log = (work_dir() / "eval.txt").string();
  CHECK(run_cli("eval --model " + model + " --data " + toy_csv() + " --split test",
                eval_log) == 0);
  const std::string eval_out = read_all(eval_log);
  CHECK(eval_out.find("accuracy ") != std::string::npos);
  CHECK(eval_out.find("fine_grained_accuracy ") != std::string::npos);

  CHECK(run_cli("eval --model " + model + " --data " + toy_csv() + " --split nowhere") == 2);
}

TEST_CASE("help is available for every subcommand and lists config keys") {
  const std::string log = (work_dir() / "help.txt").string();
  CHECK(run_cli("--help", log) == 0);
  for (const char* sub : {"gen-data", "train", "analyze-pseudo", "eval"}) {
    CHECK(run_cli(std::string(sub) + " --help", log) == 0);
  }
  CHECK(run_cli("train --help", log) == 0);
  const std::string help = read_all(log);
  CHECK(help.find("loss.gamma1") != std::string::npos);
  CHECK(help.find("train.alpha") != std::string::npos);
}
