#pragma once

#include <cstdio>
#include <deque>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "textcnn/checkpoint.hpp"
#include "textcnn/config.hpp"
#include "textcnn/gradcheck_suite.hpp"
#include "textcnn/train.hpp"

namespace textcnn::cli {

namespace fs = std::filesystem;

/// Flag storage for one subcommand; every option maps 1:1 onto a config key
/// (--arch is the flag spelling of the `family` key). A deque keeps the
/// option callbacks' references stable while flags are added.
struct FlagSet {
  std::deque<std::pair<std::string, std::optional<std::string>>> values;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    values.emplace_back(key, std::nullopt);
    auto& slot = values.back().second;
    app->add_option_function<std::string>(
           flag, [&slot](const std::string& v) { slot = v; }, help)
        ->type_name("VALUE");
  }

  KvList as_kv() const {
    KvList kv;
    for (const auto& [key, value] : values)
      if (value) kv.emplace_back(key, *value);
    return kv;
  }
};

inline void add_common_flags(CLI::App* app, FlagSet& flags) {
  flags.add(app, "--level", "level", "token level: char|word");
  flags.add(app, "--arch", "family", "architecture family: shallow|densenet");
  flags.add(app, "--windows", "windows", "comma-separated kernel windows, e.g. 3,4,5");
  flags.add(app, "--filters", "filters", "filters per window (shallow)");
  flags.add(app, "--blocks", "blocks", "dense block sizes, e.g. 10-10-4-4");
  flags.add(app, "--growth", "growth", "channels added per dense-block layer");
  flags.add(app, "--init-channels", "init_channels", "stem output channels");
  flags.add(app, "--tail", "tail", "densenet tail: max|avg");
  flags.add(app, "--dropout", "dropout", "dropout rate in [0,1)");
  flags.add(app, "--max-len", "max_len", "encoded sequence length");
  flags.add(app, "--classes", "classes", "number of target classes");
  flags.add(app, "--fc-width", "fc_width", "hidden width of the max tail");
  flags.add(app, "--lr", "lr", "adam learning rate");
  flags.add(app, "--batch", "batch", "mini-batch size");
  flags.add(app, "--epochs", "epochs", "training epochs");
  flags.add(app, "--beta1", "beta1", "adam first-moment decay");
  flags.add(app, "--beta2", "beta2", "adam second-moment decay");
  flags.add(app, "--epsilon", "epsilon", "adam denominator stabilizer");
  flags.add(app, "--seed", "seed", "master seed for all derived streams");
  flags.add(app, "--precision", "precision", "element precision: f32|f64");
  flags.add(app, "--min-freq", "min_freq", "vocabulary frequency floor");
  flags.add(app, "--train", "train", "training CSV (or synth:<per_class>)");
  flags.add(app, "--test", "test", "test CSV (or synth:<per_class>)");
  flags.add(app, "--embeddings", "embeddings", "pretrained embedding text file");
  flags.add(app, "--vocab", "vocab", "vocabulary dump file");
  flags.add(app, "--checkpoint", "checkpoint", "checkpoint file to load");
  flags.add(app, "--resume", "resume", "checkpoint file to resume training from");
  flags.add(app, "--out", "out", "output directory");
}

inline RunConfig resolve(const std::string& config_path, const FlagSet& flags) {
  KvList file_kv;
  if (!config_path.empty()) file_kv = read_config_file(config_path);
  return resolve_run_config(file_kv, flags.as_kv());
}

// ---------------------------------------------------------------------------

inline Dataset load_dataset(const std::string& path, std::size_t num_classes,
                            std::uint64_t seed, std::uint64_t synth_stream) {
  if (is_synth_path(path)) {
    RngStream rng(seed, synth_stream);
    const std::size_t per_class = parse_synth_count(path);
    return synth_dataset(num_classes, per_class,
                         synth_tokens(3 * num_classes + 24), rng);
  }
  return load_csv(path, num_classes);
}

inline WordVocab build_vocab_from(const Dataset& train, std::size_t min_freq) {
  std::vector<std::string> tokens;
  for (const auto& s : train.samples) {
    auto t = tokenize_words(s.text);
    tokens.insert(tokens.end(), t.begin(), t.end());
  }
  return WordVocab::build(tokens, min_freq);
}

template <typename T>
EncodedDataset encode_any(const Dataset& data, const RunConfig& cfg,
                          const WordVocab* vocab, const CharVocab& char_vocab) {
  if (cfg.arch.level == Level::chars)
    return encode_dataset(
        data,
        [&](const std::string& text) {
          return encode_chars(text, char_vocab, cfg.arch.max_len);
        },
        cfg.arch.max_len);
  return encode_dataset(
      data,
      [&](const std::string& text) {
        return encode_words(text, *vocab, cfg.arch.max_len);
      },
      cfg.arch.max_len);
}

template <typename T>
int run_train_typed(const RunConfig& cfg) {
  CharVocab char_vocab;
  Dataset train_set =
      load_dataset(cfg.train_path, cfg.arch.num_classes, cfg.train.seed, streams::kSynthTrain);
  Dataset test_set =
      load_dataset(cfg.test_path, cfg.arch.num_classes, cfg.train.seed, streams::kSynthTest);
  if (train_set.samples.empty()) detail::fail("training set is empty");
  if (test_set.samples.empty()) detail::fail("test set is empty");

  std::unique_ptr<WordVocab> vocab;
  std::uint64_t vocab_hash = char_vocab.fingerprint();
  std::unique_ptr<PretrainedVectors<T>> pretrained;
  if (cfg.arch.level == Level::words) {
    vocab = std::make_unique<WordVocab>(build_vocab_from(train_set, cfg.min_freq));
    vocab_hash = vocab->fingerprint();
    if (!cfg.embeddings_path.empty()) {
      pretrained = std::make_unique<PretrainedVectors<T>>(
          load_pretrained<T>(cfg.embeddings_path));
      for (const auto& w : pretrained->warnings)
        std::cerr << "warning: " << w << "\n";
    }
  } else if (!cfg.embeddings_path.empty()) {
    detail::fail("pretrained embeddings only apply to word-level models");
  }

  EncodedDataset train_enc = encode_any<T>(train_set, cfg, vocab.get(), char_vocab);
  EncodedDataset test_enc = encode_any<T>(test_set, cfg, vocab.get(), char_vocab);

  const std::size_t cols = vocab ? vocab->total_size() : 0;
  RngStream init(cfg.train.seed, streams::kInit);
  auto model = build_model<T>(cfg.arch, cols, init, vocab.get(), pretrained.get());

  AdamState<T> adam;
  std::size_t start_epoch = 0;
  if (!cfg.resume_path.empty()) {
    CheckpointMeta meta = peek_checkpoint(cfg.resume_path);
    if (meta.vocab_hash != vocab_hash)
      detail::fail("resume checkpoint was trained with a different vocabulary");
    if (detail::arch_to_text(meta.spec) != detail::arch_to_text(cfg.arch))
      detail::fail("resume checkpoint was trained with a different architecture");
    load_checkpoint(cfg.resume_path, *model, &adam);
    start_epoch = meta.epochs_done;
    std::printf("resuming after %zu completed epochs\n", start_epoch);
  }

  fs::create_directories(cfg.out_dir);
  auto history = train(*model, train_enc, &test_enc, cfg.train, adam, start_epoch,
                       [&](const EpochMetrics& m) {
                         std::printf("epoch %zu/%zu train_loss %.6f train_acc %.4f "
                                     "test_loss %.6f test_acc %.4f (%.1fs)\n",
                                     m.epoch, cfg.train.epochs, m.train_loss,
                                     m.train_acc, m.test_loss, m.test_acc, m.seconds);
                         std::fflush(stdout);
                       });

  const std::string metrics_path = (fs::path(cfg.out_dir) / "metrics.csv").string();
  write_metrics_csv(metrics_path, history);
  if (vocab) vocab->dump_to((fs::path(cfg.out_dir) / "vocab.txt").string());
  const std::string ckpt_path = (fs::path(cfg.out_dir) / "model.ckpt").string();
  save_checkpoint(ckpt_path, *model, vocab_hash, cfg.train.epochs, &adam);

  if (!history.empty()) {
    const EpochMetrics* best = &history[0];
    for (const auto& m : history)
      if (m.test_acc > best->test_acc) best = &m;
    std::printf("final test_acc %.4f; best epoch %zu test_acc %.4f\n",
                history.back().test_acc, best->epoch, best->test_acc);
  }
  std::printf("wrote %s\n", metrics_path.c_str());
  std::printf("wrote %s\n", ckpt_path.c_str());
  return 0;
}

inline int cmd_train(const RunConfig& cfg) {
  require_input_file(cfg.train_path, "train");
  require_input_file(cfg.test_path, "test");
  if (!cfg.embeddings_path.empty()) require_input_file(cfg.embeddings_path, "embeddings");
  if (!cfg.resume_path.empty()) require_input_file(cfg.resume_path, "resume");
  if (cfg.precision == "f64") return run_train_typed<double>(cfg);
  return run_train_typed<float>(cfg);
}

// ---------------------------------------------------------------------------

template <typename T>
int run_eval_typed(const RunConfig& cfg, const CheckpointMeta& meta) {
  RunConfig eff = cfg;
  eff.arch = meta.spec;

  CharVocab char_vocab;
  std::unique_ptr<WordVocab> vocab;
  std::uint64_t vocab_hash = char_vocab.fingerprint();
  if (eff.arch.level == Level::words) {
    if (cfg.vocab_path.empty())
      detail::fail("word-level evaluation needs --vocab (the dump written at training time)");
    vocab = std::make_unique<WordVocab>(WordVocab::load_dump(cfg.vocab_path));
    vocab_hash = vocab->fingerprint();
  }
  if (vocab_hash != meta.vocab_hash)
    detail::fail(detail::str("vocabulary fingerprint ", vocab_hash,
                             " does not match the checkpoint's ", meta.vocab_hash,
                             "; refusing to evaluate with mismatched indices"));

  Dataset test_set =
      load_dataset(cfg.test_path, eff.arch.num_classes, cfg.train.seed, streams::kSynthTest);
  EncodedDataset test_enc = encode_any<T>(test_set, eff, vocab.get(), char_vocab);

  const std::size_t cols = vocab ? vocab->total_size() : 0;
  RngStream init(0, streams::kInit);
  auto model = build_model<T>(eff.arch, cols, init);
  load_checkpoint(cfg.checkpoint_path, *model);

  EvalResult ev = evaluate(*model, test_enc, cfg.train.batch_size);
  std::printf("accuracy %.4f\n", ev.accuracy);
  std::printf("loss %.6f\n", ev.mean_loss);
  fs::create_directories(cfg.out_dir);
  const std::string conf_path = (fs::path(cfg.out_dir) / "confusion.csv").string();
  write_confusion_csv(conf_path, ev);
  std::printf("wrote %s\n", conf_path.c_str());
  return 0;
}

inline int cmd_eval(const RunConfig& cfg) {
  if (cfg.checkpoint_path.empty()) detail::fail("eval needs --checkpoint");
  require_input_file(cfg.checkpoint_path, "checkpoint");
  require_input_file(cfg.test_path, "test");
  if (!cfg.vocab_path.empty()) require_input_file(cfg.vocab_path, "vocab");
  CheckpointMeta meta = peek_checkpoint(cfg.checkpoint_path);
  if (meta.element_size == 8) return run_eval_typed<double>(cfg, meta);
  return run_eval_typed<float>(cfg, meta);
}

// ---------------------------------------------------------------------------

inline int cmd_inspect(const RunConfig& cfg) {
  std::size_t cols = 0;
  if (cfg.arch.level == Level::words) {
    if (!cfg.vocab_path.empty()) {
      cols = WordVocab::load_dump(cfg.vocab_path).total_size();
    } else if (!cfg.train_path.empty()) {
      require_input_file(cfg.train_path, "train");
      Dataset train_set = load_dataset(cfg.train_path, cfg.arch.num_classes,
                                       cfg.train.seed, streams::kSynthTrain);
      cols = build_vocab_from(train_set, cfg.min_freq).total_size();
    } else {
      detail::fail("word-level inspect needs --vocab or --train to size the embedding");
    }
  }
  std::cout << inspect_arch(cfg.arch, cols).table();
  return 0;
}

// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const RunConfig& cfg, const std::string& inject_fault) {
  // double precision is forced here regardless of --precision
  debug::backward_fault = inject_fault;
  GradCheckReport report = run_gradcheck_suite(cfg.train.seed);
  debug::backward_fault.clear();
  std::cout << report.table();
  std::printf("threshold %.0e: %s\n", GradCheckOptions{}.tolerance,
              report.all_pass() ? "all PASS" : "FAIL");
  return report.all_pass() ? 0 : 1;
}

// ---------------------------------------------------------------------------

inline int cmd_tokenize(const RunConfig& cfg, const std::string& text) {
  std::printf("level: %s\n", to_string(cfg.arch.level));
  std::printf("text: %s\n", text.c_str());
  if (cfg.arch.level == Level::chars) {
    CharVocab vocab;
    EncodedSequence seq = encode_chars(text, vocab, cfg.arch.max_len);
    std::string indices, tokens;
    for (std::size_t t = 0; t < seq.true_length; ++t) {
      if (t) indices.push_back(' ');
      indices += std::to_string(seq.indices[t]);
      if (t) tokens.push_back(' ');
      tokens += seq.indices[t] == CharVocab::kPadIndex
                    ? std::string("<pad>")
                    : std::string(1, vocab.symbol(seq.indices[t]));
    }
    std::printf("indices: %s (+ %zu padding)\n", indices.c_str(),
                cfg.arch.max_len - seq.true_length);
    std::printf("tokens: %s\n", tokens.c_str());
    std::printf("roundtrip: %s\n", decode_chars(seq.indices, vocab).c_str());
  } else {
    if (cfg.vocab_path.empty())
      detail::fail("word-level tokenize needs --vocab (a vocabulary dump)");
    WordVocab vocab = WordVocab::load_dump(cfg.vocab_path);
    EncodedSequence seq = encode_words(text, vocab, cfg.arch.max_len);
    std::string indices, tokens;
    for (std::size_t t = 0; t < seq.true_length; ++t) {
      if (t) {
        indices.push_back(' ');
        tokens.push_back(' ');
      }
      indices += std::to_string(seq.indices[t]);
      tokens += vocab.token(seq.indices[t]);
    }
    std::printf("indices: %s (+ %zu padding)\n", indices.c_str(),
                cfg.arch.max_len - seq.true_length);
    std::printf("tokens: %s\n", tokens.c_str());
    std::printf("roundtrip: %s\n", tokens.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"convolutional text classification toolkit"};
  app.require_subcommand(1);

  std::string config_path, tokenize_text, inject_fault;

  struct Sub {
    CLI::App* app;
    FlagSet flags;
    std::string config;
  };
  auto make_sub = [&](const char* name, const char* desc) {
    auto sub = std::make_unique<Sub>();
    sub->app = app.add_subcommand(name, desc);
    sub->app->add_option("--config", sub->config, "key = value config file");
    add_common_flags(sub->app, sub->flags);
    return sub;
  };

  auto train_cmd = make_sub("train", "train a model; writes metrics, vocab and checkpoint");
  auto eval_cmd = make_sub("eval", "evaluate a checkpoint; writes the confusion matrix");
  auto inspect_cmd = make_sub("inspect", "print per-layer shapes and parameter counts");
  auto gradcheck_cmd = make_sub("gradcheck", "finite-difference check of every op and model");
  gradcheck_cmd->app->add_option("--inject-fault", inject_fault,
                                 "testing hook: corrupt the named op's backward rule");
  auto tokenize_cmd = make_sub("tokenize", "show the encoding of a text sample");
  tokenize_cmd->app->add_option("text", tokenize_text, "text to encode")->required();

  try {
    app.parse(argc, argv);
    if (train_cmd->app->parsed())
      return cmd_train(resolve(train_cmd->config, train_cmd->flags));
    if (eval_cmd->app->parsed())
      return cmd_eval(resolve(eval_cmd->config, eval_cmd->flags));
    if (inspect_cmd->app->parsed())
      return cmd_inspect(resolve(inspect_cmd->config, inspect_cmd->flags));
    if (gradcheck_cmd->app->parsed())
      return cmd_gradcheck(resolve(gradcheck_cmd->config, gradcheck_cmd->flags), inject_fault);
    if (tokenize_cmd->app->parsed())
      return cmd_tokenize(resolve(tokenize_cmd->config, tokenize_cmd->flags), tokenize_text);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace textcnn::cli
