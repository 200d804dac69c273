#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "textcnn/config.hpp"

using namespace textcnn;

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drives the real binary; TEXTCNN_CLI_PATH is injected by the build.
CliResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / "textcnn_cli_io";
  fs::create_directories(dir);
  fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
  fs::path err = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  std::string cmd = std::string(TEXTCNN_CLI_PATH) + " " + args + " > " +
                    out.string() + " 2> " + err.string();
  int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WEXITSTATUS(status);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config precedence: flags beat file beats defaults") {
  fs::path dir = temp_dir("textcnn_cfg_test");
  fs::path cfg_path = dir / "run.cfg";
  {
    std::ofstream out(cfg_path);
    out << "# a comment line\n";
    out << "level = word\n";
    out << "filters = 64   # trailing comment\n";
    out << "\n";
    out << "blocks = 10-10-4-4\n";
  }
  KvList file_kv = read_config_file(cfg_path.string());
  RunConfig merged = resolve_run_config(file_kv, {{"level", "char"}});
  REQUIRE(merged.arch.level == Level::chars);  // flag wins
  REQUIRE(merged.arch.filters == 64);          // file wins over default
  REQUIRE(merged.arch.blocks == std::array<std::size_t, 4>{10, 10, 4, 4});
  // untouched keys fall back to the char shallow defaults
  REQUIRE(merged.arch.windows == std::vector<std::size_t>{15, 20, 25});

  RunConfig defaults = resolve_run_config({}, {});
  REQUIRE(defaults.arch.level == Level::words);
  REQUIRE(defaults.arch.family == Family::shallow);
  REQUIRE(defaults.arch.windows == std::vector<std::size_t>{3, 4, 5});
  REQUIRE(defaults.arch.filters == 100);
  REQUIRE(defaults.arch.dropout == 0.5);
  REQUIRE(defaults.train.adam.lr == 0.001);
  REQUIRE(defaults.train.batch_size == 128);
  REQUIRE(defaults.train.epochs == 10);
  REQUIRE(defaults.precision == "f32");
}

TEST_CASE("config rejects unknown keys and bad values") {
  REQUIRE_THROWS_WITH(resolve_run_config({{"filterz", "100"}}, {}),
                      Catch::Matchers::ContainsSubstring("unknown config key 'filterz'"));
  REQUIRE_THROWS_WITH(resolve_run_config({{"filters", "-5"}}, {}),
                      Catch::Matchers::ContainsSubstring("positive"));
  REQUIRE_THROWS_WITH(resolve_run_config({{"precision", "f16"}}, {}),
                      Catch::Matchers::ContainsSubstring("precision"));
  REQUIRE_THROWS_WITH(resolve_run_config({{"blocks", "4-4-4"}}, {}),
                      Catch::Matchers::ContainsSubstring("exactly 4"));
  REQUIRE_THROWS_WITH(resolve_run_config({{"dropout", "1.5"}}, {}),
                      Catch::Matchers::ContainsSubstring("dropout"));

  fs::path dir = temp_dir("textcnn_cfg_bad");
  fs::path cfg_path = dir / "bad.cfg";
  {
    std::ofstream out(cfg_path);
    out << "no equals sign here\n";
  }
  REQUIRE_THROWS_WITH(read_config_file(cfg_path.string()),
                      Catch::Matchers::ContainsSubstring("line 1"));
}

TEST_CASE("cli help lists every config key's flag") {
  CliResult r = run_cli("train --help");
  REQUIRE(r.exit_code == 0);
  for (const char* flag :
       {"--config", "--level", "--arch", "--windows", "--filters", "--blocks",
        "--growth", "--init-channels", "--tail", "--dropout", "--max-len",
        "--classes", "--fc-width", "--lr", "--batch", "--epochs", "--beta1",
        "--beta2", "--epsilon", "--seed", "--precision", "--min-freq", "--train",
        "--test", "--embeddings", "--vocab", "--checkpoint", "--resume", "--out"})
    REQUIRE_THAT(r.out, Catch::Matchers::ContainsSubstring(flag));
}

TEST_CASE("cli inspect golden output for the default char shallow model") {
  CliResult r = run_cli("inspect --level char --arch shallow");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.out ==
          "layer                  input                output                     params\n"
          "onehot                 (B, 1014)            (B, 69, 1014)                   0\n"
          "conv_h15               (B, 69, 1014)        (B, 700, 1000)             725200\n"
          "maxpool_h15            (B, 700, 1000)       (B, 700)                        0\n"
          "conv_h20               (B, 69, 1014)        (B, 700, 995)              966700\n"
          "maxpool_h20            (B, 700, 995)        (B, 700)                        0\n"
          "conv_h25               (B, 69, 1014)        (B, 700, 990)             1208200\n"
          "maxpool_h25            (B, 700, 990)        (B, 700)                        0\n"
          "concat                 3 x (B, 700)         (B, 2100)                       0\n"
          "classifier             (B, 2100)            (B, 2)                       4202\n"
          "total                                                                 2904302\n"
          "concat width = 2100\n");
}

TEST_CASE("cli inspect reports densenet transition lengths") {
  CliResult r = run_cli("inspect --level char --arch densenet");
  REQUIRE(r.exit_code == 0);
  REQUIRE_THAT(r.out, Catch::Matchers::ContainsSubstring("transition lengths: 507/254/127"));
  REQUIRE_THAT(r.out, Catch::Matchers::ContainsSubstring("tail pool kernel = 3"));

  // the total line equals the sum of the parameter column
  std::istringstream lines(r.out);
  std::string line;
  long long sum = 0, total = -1;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    std::string word, last;
    while (ls >> word) last = word;
    if (first == "total") {
      total = std::stoll(last);
      break;
    }
    if (!last.empty() && last.find_first_not_of("0123456789") == std::string::npos)
      sum += std::stoll(last);
  }
  REQUIRE(total == sum);
}

TEST_CASE("cli train smoke run on synthetic data") {
  fs::path dir = temp_dir("textcnn_cli_train");
  CliResult r = run_cli(
      "train --level word --arch shallow --train synth:8 --test synth:4 "
      "--classes 3 --epochs 2 --batch 16 --max-len 16 --windows 2,3 --filters 3 "
      "--seed 11 --out " + dir.string());
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(dir / "metrics.csv"));
  REQUIRE(fs::exists(dir / "model.ckpt"));
  REQUIRE(fs::exists(dir / "vocab.txt"));

  std::string metrics = slurp(dir / "metrics.csv");
  std::size_t rows = 0;
  for (char c : metrics)
    if (c == '\n') ++rows;
  REQUIRE(rows == 3);  // header + one row per epoch
  REQUIRE_THAT(metrics, Catch::Matchers::StartsWith(
                            "epoch,train_loss,train_acc,test_loss,test_acc,seconds"));
}

TEST_CASE("cli train refuses a missing dataset path") {
  CliResult r = run_cli("train --train /no/such/file.csv --test synth:4");
  REQUIRE(r.exit_code != 0);
  REQUIRE_THAT(r.err, Catch::Matchers::ContainsSubstring("/no/such/file.csv"));
}

TEST_CASE("cli eval is byte-deterministic and validates the vocabulary hash") {
  fs::path dir = temp_dir("textcnn_cli_eval");
  CliResult tr = run_cli(
      "train --level word --arch shallow --train synth:8 --test synth:4 "
      "--classes 3 --epochs 2 --batch 16 --max-len 16 --windows 2,3 --filters 3 "
      "--seed 11 --out " + dir.string());
  REQUIRE(tr.exit_code == 0);

  const std::string eval_args =
      "eval --checkpoint " + (dir / "model.ckpt").string() + " --vocab " +
      (dir / "vocab.txt").string() + " --test synth:4 --seed 11 --out " + dir.string();
  CliResult e1 = run_cli(eval_args);
  INFO(e1.err);
  REQUIRE(e1.exit_code == 0);
  // formatting contract: accuracy printed with exactly 4 decimal places
  std::size_t acc_pos = e1.out.find("accuracy ");
  REQUIRE(acc_pos != std::string::npos);
  std::string acc_field = e1.out.substr(acc_pos + 9, e1.out.find('\n', acc_pos) - acc_pos - 9);
  REQUIRE(acc_field.size() == 6);
  REQUIRE(acc_field[1] == '.');
  std::string confusion1 = slurp(dir / "confusion.csv");

  CliResult e2 = run_cli(eval_args);
  REQUIRE(e2.out == e1.out);
  REQUIRE(slurp(dir / "confusion.csv") == confusion1);

  // a different vocabulary dump must be refused
  fs::path wrong_vocab = dir / "wrong_vocab.txt";
  {
    std::ofstream out(wrong_vocab);
    out << "<pad>\n<oov>\nalpha\nbeta\n";
  }
  CliResult bad = run_cli("eval --checkpoint " + (dir / "model.ckpt").string() +
                          " --vocab " + wrong_vocab.string() + " --test synth:4");
  REQUIRE(bad.exit_code != 0);
  REQUIRE_THAT(bad.err, Catch::Matchers::ContainsSubstring("fingerprint"));
}

TEST_CASE("cli tokenize shows char indices and word oov handling") {
  CliResult c = run_cli("tokenize --level char \"ab\"");
  REQUIRE(c.exit_code == 0);
  REQUIRE_THAT(c.out, Catch::Matchers::ContainsSubstring("indices: 0 1 (+ 1012 padding)"));
  REQUIRE_THAT(c.out, Catch::Matchers::ContainsSubstring("roundtrip: ab"));

  fs::path dir = temp_dir("textcnn_cli_tok");
  fs::path vocab_path = dir / "vocab.txt";
  {
    std::ofstream out(vocab_path);
    out << "<pad>\n<oov>\ngood\nmovie\n";
  }
  CliResult w = run_cli("tokenize --level word --vocab " + vocab_path.string() +
                        " \"good zzzzunseen\"");
  REQUIRE(w.exit_code == 0);
  REQUIRE_THAT(w.out, Catch::Matchers::ContainsSubstring("indices: 2 1"));
  REQUIRE_THAT(w.out, Catch::Matchers::ContainsSubstring("tokens: good <oov>"));
}

TEST_CASE("cli gradcheck passes clean and fails with an injected fault") {
  CliResult ok = run_cli("gradcheck --seed 5");
  REQUIRE(ok.exit_code == 0);
  REQUIRE_THAT(ok.out, Catch::Matchers::ContainsSubstring("all PASS"));
  // every layer op appears in the report
  for (const char* op :
       {"embedding", "conv1d", "pad1d", "relu", "global_max_pool", "local_max_pool",
        "global_avg_pool", "linear", "dropout", "batch_norm", "residual_add",
        "dense_concat", "softmax_cross_entropy", "model shallow char",
        "model shallow word", "model densenet char", "model densenet word"})
    REQUIRE_THAT(ok.out, Catch::Matchers::ContainsSubstring(op));

  CliResult bad = run_cli("gradcheck --seed 5 --inject-fault relu");
  REQUIRE(bad.exit_code == 1);
  REQUIRE_THAT(bad.out, Catch::Matchers::ContainsSubstring("FAIL"));
}
