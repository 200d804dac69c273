#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <map>

#include "test_util.hpp"
#include "textcnn/checkpoint.hpp"
#include "textcnn/train.hpp"

using namespace textcnn;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

EncodedDataset encode_words_dataset(const Dataset& data, const WordVocab& vocab,
                                    std::size_t max_len) {
  return encode_dataset(
      data, [&](const std::string& text) { return encode_words(text, vocab, max_len); },
      max_len);
}

WordVocab vocab_from(const Dataset& data) {
  std::vector<std::string> tokens;
  for (const auto& s : data.samples) {
    auto t = tokenize_words(s.text);
    tokens.insert(tokens.end(), t.begin(), t.end());
  }
  return WordVocab::build(tokens);
}

template <typename T>
std::vector<Tensor<T>> snapshot(TextClassifier<T>& model) {
  std::vector<Tensor<T>> out;
  for (auto* p : model.parameters()) out.push_back(p->value);
  return out;
}

template <typename T>
bool bit_equal(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_shape(b[i])) return false;
    for (std::size_t j = 0; j < a[i].size(); ++j)
      if (a[i][j] != b[i][j]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("load_csv parses the quoted schema") {
  std::string path = temp_path("textcnn_csv_test.csv");
  {
    std::ofstream out(path);
    out << "\"3\",\"title\",\"body\"\n";
    out << "\"1\",\"he said \"\"hi\"\" twice\"\n";
    out << "\"2\",\"\"\n";
    out << "\"4\",\"last, with comma\"\r\n";
  }
  Dataset d = load_csv(path, 4);
  REQUIRE(d.samples.size() == 4);
  REQUIRE(d.samples[0].label == 2);
  REQUIRE(d.samples[0].text == "title body");
  REQUIRE(d.samples[1].label == 0);
  REQUIRE(d.samples[1].text == "he said \"hi\" twice");
  REQUIRE(d.samples[2].text.empty());
  REQUIRE(d.samples[3].text == "last, with comma");

  {
    std::ofstream out(path);
    out << "\"1\",\"ok\"\n\"9\",\"bad label\"\n";
  }
  REQUIRE_THROWS_WITH(load_csv(path, 4), Catch::Matchers::ContainsSubstring("row 2"));

  {
    std::ofstream out(path);
    out << "\"1\",\"no closing quote\n";
  }
  REQUIRE_THROWS_WITH(load_csv(path, 4),
                      Catch::Matchers::ContainsSubstring("unbalanced quotes"));
  std::remove(path.c_str());
}

TEST_CASE("csv write/load round-trip") {
  Dataset d;
  d.num_classes = 3;
  d.samples = {{0, "plain text"}, {2, "with \"quotes\" and, commas"}, {1, ""}};
  std::string path = temp_path("textcnn_csv_rt.csv");
  write_csv(path, d);
  Dataset back = load_csv(path, 3);
  REQUIRE(back.samples.size() == d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    REQUIRE(back.samples[i].label == d.samples[i].label);
    REQUIRE(back.samples[i].text == d.samples[i].text);
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic dataset is balanced, marker-disjoint and separable") {
  auto tokens = synth_tokens(40);
  RngStream rng(21, streams::kSynthTrain);
  Dataset d = synth_dataset(4, 50, tokens, rng);
  REQUIRE(d.samples.size() == 200);

  std::map<int, int> per_class;
  for (const auto& s : d.samples) per_class[s.label]++;
  for (int c = 0; c < 4; ++c) REQUIRE(per_class[c] == 50);

  // bag-of-marker-counts classifier is exact on it
  for (const auto& s : d.samples) {
    std::array<int, 4> marker_hits{};
    for (const auto& tok : tokenize_words(s.text))
      for (int c = 0; c < 4; ++c)
        for (int m = 0; m < 3; ++m)
          if (tok == tokens[3 * c + m]) marker_hits[c]++;
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if (marker_hits[c] > marker_hits[best]) best = c;
    REQUIRE(marker_hits[s.label] >= 2);
    for (int c = 0; c < 4; ++c)
      if (c != s.label) REQUIRE(marker_hits[c] == 0);  // markers never leak
    REQUIRE(best == s.label);
  }

  RngStream small(3, 0);
  REQUIRE_THROWS(synth_dataset(4, 5, synth_tokens(11), small));
}

TEST_CASE("make_batches splits, shuffles deterministically and keeps the tail") {
  auto tokens = synth_tokens(20);
  RngStream rng(5, streams::kSynthTrain);
  Dataset d = synth_dataset(4, 75, tokens, rng);  // 300 samples
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 24);

  RngStream s1(9, streams::shuffle(0));
  auto batches = make_batches(enc, 128, &s1);
  REQUIRE(batches.size() == 3);
  REQUIRE(batches[0].labels.size() == 128);
  REQUIRE(batches[1].labels.size() == 128);
  REQUIRE(batches[2].labels.size() == 44);
  REQUIRE(batches[0].indices.shape() == Shape{128, 24});

  RngStream s2(9, streams::shuffle(0));
  auto again = make_batches(enc, 128, &s2);
  for (std::size_t i = 0; i < 128; ++i) REQUIRE(batches[0].labels[i] == again[0].labels[i]);

  auto unshuffled = make_batches(enc, 128, nullptr);
  for (std::size_t i = 0; i < 128; ++i)
    REQUIRE(unshuffled[0].labels[i] == enc.labels[i]);

  // char-level batches carry the (128, 1014) layout
  CharVocab cv;
  EncodedDataset cenc = encode_dataset(
      d, [&](const std::string& text) { return encode_chars(text, cv); }, kCharMaxLen);
  auto cbatches = make_batches(cenc, 128, nullptr);
  REQUIRE(cbatches[0].indices.shape() == Shape{128, 1014});
}

TEST_CASE("adam first step matches the hand-derived value") {
  Parameter<double> theta("theta", Tensor<double>({1}, 0.0));
  theta.grad[0] = 1.0;
  std::vector<Parameter<double>*> params = {&theta};
  AdamState<double> state = AdamState<double>::zeros(params);
  adam_step(params, state, AdamConfig{});
  REQUIRE(state.t == 1);
  REQUIRE(std::abs(theta.value[0] + 0.001) < 1e-9);
  REQUIRE(std::abs(theta.value[0] - (-0.000999999990)) < 1e-12);
}

TEST_CASE("adam zero gradient, symmetry and mask behavior") {
  Parameter<double> a("a", Tensor<double>({2}, 1.5));
  std::vector<Parameter<double>*> pa = {&a};
  AdamState<double> sa = AdamState<double>::zeros(pa);
  adam_step(pa, sa, AdamConfig{});  // g = 0
  REQUIRE(sa.t == 1);
  REQUIRE(a.value[0] == 1.5);
  REQUIRE(a.value[1] == 1.5);

  Parameter<double> p1("p1", Tensor<double>({3}, 0.25));
  Parameter<double> p2("p2", Tensor<double>({3}, 0.25));
  for (int i = 0; i < 3; ++i) {
    p1.grad[i] = 0.7;
    p2.grad[i] = 0.7;
  }
  std::vector<Parameter<double>*> both = {&p1, &p2};
  AdamState<double> sb = AdamState<double>::zeros(both);
  adam_step(both, sb, AdamConfig{});
  for (int i = 0; i < 3; ++i) REQUIRE(p1.value[i] == p2.value[i]);

  // masked coordinates never move
  Parameter<double> masked("m", Tensor<double>({2}, 0.0));
  masked.grad_mask = Tensor<double>::from_data({2}, {0.0, 1.0});
  masked.grad[0] = 5.0;
  masked.grad[1] = 5.0;
  std::vector<Parameter<double>*> pm = {&masked};
  AdamState<double> sm = AdamState<double>::zeros(pm);
  adam_step(pm, sm, AdamConfig{});
  REQUIRE(masked.value[0] == 0.0);
  REQUIRE(masked.value[1] != 0.0);

  // non-finite gradient aborts atomically
  Parameter<double> bad("bad", Tensor<double>({2}, 1.0));
  bad.grad[1] = std::numeric_limits<double>::quiet_NaN();
  std::vector<Parameter<double>*> pb = {&bad};
  AdamState<double> sbad = AdamState<double>::zeros(pb);
  REQUIRE_THROWS_WITH(adam_step(pb, sbad, AdamConfig{}),
                      Catch::Matchers::ContainsSubstring("non-finite gradient"));
  REQUIRE(bad.value[0] == 1.0);
  REQUIRE(sbad.t == 0);
}

TEST_CASE("adam step magnitude stays within 1.1 * lr on random steps") {
  RngStream rng(33, 70);
  Parameter<double> p("p", rand_uniform<double>({64}, -1, 1, rng));
  std::vector<Parameter<double>*> params = {&p};
  AdamState<double> state = AdamState<double>::zeros(params);
  AdamConfig cfg;
  for (int step = 0; step < 50; ++step) {
    Tensor<double> before = p.value;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = rng.uniform(-1, 1);
    adam_step(params, state, cfg);
    if (state.t == 1) continue;  // bound asserted past the first step
    for (std::size_t i = 0; i < p.value.size(); ++i)
      REQUIRE(std::abs(p.value[i] - before[i]) <= 1.1 * cfg.lr);
  }
}

TEST_CASE("training with lr = 0 is a bit-exact no-op") {
  auto tokens = synth_tokens(18);
  RngStream rng(13, streams::kSynthTrain);
  Dataset d = synth_dataset(3, 8, tokens, rng);
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 16);

  ArchSpec spec = shallow_default(Level::words);
  spec.windows = {2, 3};
  spec.filters = 4;
  spec.max_len = 16;
  spec.num_classes = 3;
  RngStream init(3, streams::kInit);
  auto model = build_model<float>(spec, vocab.total_size(), init);
  auto before = snapshot(*model);

  TrainConfig cfg;
  cfg.adam.lr = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 17;
  AdamState<float> adam;
  auto history = train(*model, enc, nullptr, cfg, adam);
  REQUIRE(history.size() == 3);
  REQUIRE(bit_equal(before, snapshot(*model)));
}

TEST_CASE("zero epochs yields an empty history and an untouched model") {
  auto tokens = synth_tokens(12);
  RngStream rng(14, streams::kSynthTrain);
  Dataset d = synth_dataset(2, 6, tokens, rng);
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 12);

  ArchSpec spec = shallow_default(Level::words);
  spec.windows = {2};
  spec.filters = 3;
  spec.max_len = 12;
  RngStream init(4, streams::kInit);
  auto model = build_model<float>(spec, vocab.total_size(), init);
  auto before = snapshot(*model);
  TrainConfig cfg;
  cfg.epochs = 0;
  AdamState<float> adam;
  REQUIRE(train(*model, enc, nullptr, cfg, adam).empty());
  REQUIRE(bit_equal(before, snapshot(*model)));
}

TEST_CASE("fixed-seed training is reproducible") {
  auto tokens = synth_tokens(15);
  auto run = [&] {
    RngStream rng(15, streams::kSynthTrain);
    Dataset d = synth_dataset(2, 12, tokens, rng);
    WordVocab vocab = vocab_from(d);
    EncodedDataset enc = encode_words_dataset(d, vocab, 12);
    ArchSpec spec = shallow_default(Level::words);
    spec.windows = {2, 3};
    spec.filters = 4;
    spec.max_len = 12;
    RngStream init(5, streams::kInit);
    auto model = build_model<float>(spec, vocab.total_size(), init);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.seed = 99;
    AdamState<float> adam;
    return train(*model, enc, &enc, cfg, adam);
  };
  auto h1 = run(), h2 = run();
  REQUIRE(h1.size() == h2.size());
  for (std::size_t e = 0; e < h1.size(); ++e) {
    REQUIRE(h1[e].train_loss == h2[e].train_loss);
    REQUIRE(h1[e].train_acc == h2[e].train_acc);
    REQUIRE(h1[e].test_loss == h2[e].test_loss);
    REQUIRE(h1[e].test_acc == h2[e].test_acc);
  }
}

TEST_CASE("loss decreases over the first epochs of the default shallow word model") {
  auto tokens = synth_tokens(24);
  RngStream rng(21, streams::kSynthTrain);
  Dataset d = synth_dataset(4, 25, tokens, rng);
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 32);

  ArchSpec spec = shallow_default(Level::words);  // default windows/filters/dropout
  spec.max_len = 32;
  spec.num_classes = 4;
  RngStream init(7, streams::kInit);
  auto model = build_model<float>(spec, vocab.total_size(), init);
  TrainConfig cfg;  // default lr 0.001, batch 128
  cfg.epochs = 5;
  cfg.seed = 7;
  AdamState<float> adam;
  auto history = train(*model, enc, nullptr, cfg, adam);
  int non_decreasing = 0;
  for (std::size_t e = 1; e < history.size(); ++e)
    if (history[e].train_loss >= history[e - 1].train_loss) ++non_decreasing;
  REQUIRE(non_decreasing <= 1);

  // the masked padding column never trains away
  for (auto* p : model->parameters())
    if (p->name == "embedding")
      for (std::size_t r = 0; r < p->value.dim(0); ++r)
        REQUIRE(p->value(r, WordVocab::kPadIndex) == 0.0f);
}

TEST_CASE("evaluate applies the lowest-index tie rule and fills the confusion matrix") {
  auto tokens = synth_tokens(20);
  RngStream rng(31, streams::kSynthTrain);
  Dataset d = synth_dataset(4, 10, tokens, rng);
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 16);

  ArchSpec spec = shallow_default(Level::words);
  spec.windows = {2};
  spec.filters = 3;
  spec.max_len = 16;
  spec.num_classes = 4;
  RngStream init(8, streams::kInit);
  auto model = build_model<float>(spec, vocab.total_size(), init);
  // zero the classifier: logits identical per class, so every prediction
  // falls back to class 0
  for (auto* p : model->parameters())
    if (p->name.rfind("classifier", 0) == 0) p->value.fill(0.0f);

  EvalResult ev = evaluate(*model, enc, 16);
  REQUIRE(ev.accuracy == 0.25);
  for (std::size_t t = 0; t < 4; ++t) {
    REQUIRE(ev.at(t, 0) == 10);  // every sample lands in the first column
    std::size_t row_sum = 0;
    for (std::size_t p = 0; p < 4; ++p) row_sum += ev.at(t, p);
    REQUIRE(row_sum == 10);
  }

  // eval accuracy does not depend on the batch split
  EvalResult b1 = evaluate(*model, enc, 1);
  EvalResult b128 = evaluate(*model, enc, 128);
  REQUIRE(b1.accuracy == b128.accuracy);

  EncodedDataset empty;
  empty.num_classes = 4;
  empty.max_len = 16;
  REQUIRE_THROWS(evaluate(*model, empty, 8));
}

TEST_CASE("checkpoint round-trip restores every tensor bit-exactly") {
  auto tokens = synth_tokens(18);
  RngStream rng(41, streams::kSynthTrain);
  Dataset d = synth_dataset(3, 8, tokens, rng);
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 16);

  ArchSpec spec = densenet_default(Level::words);
  spec.max_len = 16;
  spec.growth = 3;
  spec.init_channels = 4;
  spec.num_classes = 3;
  RngStream init(9, streams::kInit);
  auto model = build_model<float>(spec, vocab.total_size(), init);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 5;
  AdamState<float> adam;
  train(*model, enc, nullptr, cfg, adam);

  std::string path = temp_path("textcnn_ckpt_test.bin");
  save_checkpoint(path, *model, vocab.fingerprint(), 1, &adam);

  CheckpointMeta meta = peek_checkpoint(path);
  REQUIRE(meta.version == kCheckpointVersion);
  REQUIRE(meta.element_size == 4);
  REQUIRE(meta.vocab_hash == vocab.fingerprint());
  REQUIRE(meta.epochs_done == 1);
  REQUIRE(meta.has_adam);
  REQUIRE(meta.spec.family == Family::densenet);
  REQUIRE(meta.spec.growth == 3);

  RngStream init2(1234, streams::kInit);  // different init, fully overwritten
  auto restored = build_model<float>(meta.spec, vocab.total_size(), init2);
  AdamState<float> adam2;
  load_checkpoint(path, *restored, &adam2);
  REQUIRE(adam2.t == adam.t);
  REQUIRE(bit_equal(snapshot(*model), snapshot(*restored)));
  auto stats_a = model->state_tensors();
  auto stats_b = restored->state_tensors();
  REQUIRE(stats_a.size() == stats_b.size());
  for (std::size_t i = 0; i < stats_a.size(); ++i)
    for (std::size_t j = 0; j < stats_a[i].second->size(); ++j)
      REQUIRE((*stats_a[i].second)[j] == (*stats_b[i].second)[j]);

  // precision mismatch is refused
  RngStream init3(1, streams::kInit);
  auto wrong = build_model<double>(meta.spec, vocab.total_size(), init3);
  REQUIRE_THROWS_WITH(load_checkpoint(path, *wrong),
                      Catch::Matchers::ContainsSubstring("64-bit"));

  // corrupted magic is refused
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  REQUIRE_THROWS_WITH(peek_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));

  // truncation is refused
  save_checkpoint(path, *model, vocab.fingerprint(), 1, &adam);
  auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size / 2);
  RngStream init4(2, streams::kInit);
  auto half = build_model<float>(meta.spec, vocab.total_size(), init4);
  REQUIRE_THROWS_WITH(load_checkpoint(path, *half),
                      Catch::Matchers::ContainsSubstring("truncated"));
  std::remove(path.c_str());
}

TEST_CASE("resumed training matches an uninterrupted run") {
  auto tokens = synth_tokens(18);
  RngStream rng(51, streams::kSynthTrain);
  Dataset d = synth_dataset(3, 10, tokens, rng);
  WordVocab vocab = vocab_from(d);
  EncodedDataset enc = encode_words_dataset(d, vocab, 16);

  ArchSpec spec = densenet_default(Level::words);
  spec.max_len = 16;
  spec.growth = 3;
  spec.init_channels = 4;
  spec.num_classes = 3;
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 123;

  // uninterrupted
  RngStream init_a(77, streams::kInit);
  auto straight = build_model<float>(spec, vocab.total_size(), init_a);
  AdamState<float> adam_a;
  auto hist_a = train(*straight, enc, nullptr, cfg, adam_a);

  // two epochs, checkpoint, restore into a fresh model, two more
  RngStream init_b(77, streams::kInit);
  auto interrupted = build_model<float>(spec, vocab.total_size(), init_b);
  AdamState<float> adam_b;
  TrainConfig first_half = cfg;
  first_half.epochs = 2;
  auto hist_b1 = train(*interrupted, enc, nullptr, first_half, adam_b);

  std::string path = temp_path("textcnn_resume_test.bin");
  save_checkpoint(path, *interrupted, vocab.fingerprint(), 2, &adam_b);
  RngStream init_c(31337, streams::kInit);
  auto resumed = build_model<float>(spec, vocab.total_size(), init_c);
  AdamState<float> adam_c;
  CheckpointMeta meta = load_checkpoint(path, *resumed, &adam_c);
  auto hist_b2 = train(*resumed, enc, nullptr, cfg, adam_c, meta.epochs_done);
  std::remove(path.c_str());

  REQUIRE(hist_b1.size() + hist_b2.size() == hist_a.size());
  REQUIRE(bit_equal(snapshot(*straight), snapshot(*resumed)));
  for (std::size_t e = 0; e < hist_b2.size(); ++e) {
    REQUIRE(hist_b2[e].train_loss == hist_a[2 + e].train_loss);
    REQUIRE(hist_b2[e].train_acc == hist_a[2 + e].train_acc);
  }
}

TEST_CASE("metrics csv format is stable") {
  std::vector<EpochMetrics> history = {{1, 1.386294, 0.25, 1.3, 0.5, 12.345678}};
  std::string path = temp_path("textcnn_metrics_test.csv");
  write_metrics_csv(path, history);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  REQUIRE(header == "epoch,train_loss,train_acc,test_loss,test_acc,seconds");
  REQUIRE(row == "1,1.386294,0.2500,1.300000,0.5000,12.346");
  std::remove(path.c_str());
}
