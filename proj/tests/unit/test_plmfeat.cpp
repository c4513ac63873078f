#include <doctest.h>

#include <json.hpp>

#include <fstream>

#include "common/error.hpp"
#include "plmfeat/encoder.hpp"
#include "plmfeat/safetensors.hpp"
#include "unit/helpers.hpp"

using namespace b4g;
using namespace b4g::plmfeat;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::internal;
}

const json& expected() {
  static const json j = json::parse(std::ifstream(testing::fixture("tiny_bert/expected.json")));
  return j;
}

const EncoderBackend& tiny_bert() {
  static const auto enc = load_bert_directory(testing::fixture("tiny_bert"));
  return *enc;
}

corpus::Instance make_instance(std::vector<std::string> tokens, std::size_t start, std::size_t len) {
  corpus::Instance inst;
  inst.sentence_id = "t";
  inst.tokens = std::move(tokens);
  inst.aspect_start = start;
  inst.aspect_len = len;
  return inst;
}

}  // namespace

TEST_CASE("word piece tokenization matches the reference tokenizer") {
  const auto& tok = tiny_bert().tokenizer();
  for (const auto& [word, pieces] : expected()["words"].items()) {
    CAPTURE(word);
    CHECK(tok.word_pieces(word) == pieces.get<std::vector<std::string>>());
  }
}

TEST_CASE("tiny bert hidden states and attention match the reference") {
  const auto& enc = tiny_bert();
  for (const auto& c : expected()["cases"]) {
    const auto sentence = c["sentence"].get<std::vector<std::string>>();
    const auto aspect = c["aspect"].get<std::vector<std::string>>();
    const auto rendered = render_pair(enc.tokenizer(), sentence, aspect);
    CHECK(rendered.pieces == c["pieces"].get<std::vector<std::string>>());
    CHECK(rendered.ids == c["ids"].get<std::vector<int>>());
    CHECK(rendered.type_ids == c["type_ids"].get<std::vector<int>>());

    const auto out = enc.transformer().forward(rendered.ids, rendered.type_ids);
    REQUIRE(out.hidden.size() == c["hidden"].size());
    double worst = 0;
    for (std::size_t l = 0; l < out.hidden.size(); ++l) {
      const auto& ref = c["hidden"][l];
      for (std::size_t t = 0; t < ref.size(); ++t)
        for (std::size_t k = 0; k < ref[t].size(); ++k)
          worst = std::max(worst, std::abs(out.hidden[l].value()(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) -
                                           ref[t][k].get<double>()));
    }
    CHECK(worst < 1e-6);
    worst = 0;
    for (std::size_t l = 0; l < out.attention.size(); ++l)
      for (std::size_t h = 0; h < out.attention[l].size(); ++h) {
        const auto& ref = c["attention"][l][h];
        for (std::size_t i = 0; i < ref.size(); ++i)
          for (std::size_t j = 0; j < ref[i].size(); ++j)
            worst = std::max(worst, std::abs(out.attention[l][h](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                             ref[i][j].get<double>()));
      }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("encoded features use first sub-word states and word-level attention") {
  const auto& enc = tiny_bert();
  const auto inst = make_instance({"The", "keyboard", "is", "zxqv", "cheap"}, 3, 1);
  const std::vector<int> layers{1, 3};
  const auto rendered = render_pair(enc.tokenizer(), inst.tokens, inst.aspect_tokens());
  const auto alignment = align_rendered(enc, inst.tokens, rendered);
  CHECK(alignment.first_subword == std::vector<std::size_t>{1, 2, 4, 5, 6});
  const auto f = encode(enc, inst, layers);
  const auto out = enc.transformer().forward(rendered.ids, rendered.type_ids);
  REQUIRE(f.hidden.size() == 2);
  CHECK(f.n() == 5);
  CHECK(f.d_model == 16);
  CHECK(f.heads == 4);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& full = out.hidden[static_cast<std::size_t>(layers[k])].value();
    for (Eigen::Index w = 0; w < 5; ++w)
      CHECK(f.hidden[k].value().row(w) == full.row(static_cast<Eigen::Index>(alignment.first_subword[static_cast<std::size_t>(w)])));
    const auto avg = average_heads(out.attention[static_cast<std::size_t>(layers[k] - 1)]);
    // "keyboard" spans pieces 2 and 3.
    CHECK(f.attention[k](0, 1) == doctest::Approx(avg(1, 2) + avg(1, 3)).epsilon(1e-12));
    CHECK(f.attention[k](1, 0) == doctest::Approx(avg(2, 1)).epsilon(1e-12));
    CHECK(f.attention[k].minCoeff() >= 0.0);
    CHECK(f.attention[k].rowwise().sum().maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("average heads and word attention on hand examples") {
  ag::Matrix a(2, 2), b(2, 2);
  a << 1, 0, 0.5, 0.5;
  b << 0, 1, 0.25, 0.75;
  const ag::Matrix heads[] = {a, b};
  const ag::Matrix avg = average_heads(heads);
  CHECK(avg(0, 0) == 0.5);
  CHECK(avg(1, 1) == 0.625);
  CHECK(kind_of([] { average_heads({}); }) == ErrorKind::value);

  // [CLS] w0 w1a ##w1b [SEP] asp [SEP]
  ag::Matrix m = ag::Matrix::Constant(7, 7, 0.01);
  m(1, 2) = 0.2;
  m(1, 3) = 0.3;
  m(1, 5) = 0.9;
  depgraph::SubwordAlignment al;
  al.first_subword = {1, 2};
  al.groups = {{1}, {2, 3}};
  al.special_positions = {0, 4, 5, 6};
  al.sequence_length = 7;
  const auto w = word_attention(m, al);
  CHECK(w(0, 1) == doctest::Approx(0.5));
  CHECK(w(0, 0) == doctest::Approx(0.01));
  CHECK(w(1, 1) == doctest::Approx(0.02));
}

TEST_CASE("over-long sequences are truncation errors") {
  const auto enc = make_encoder("stub:hidden=8,layers=2,heads=2,max_positions=6");
  const auto inst = make_instance({"a", "b", "c", "d", "e"}, 0, 1);
  CHECK(kind_of([&] { encode(*enc, inst, {1}); }) == ErrorKind::truncation);
}

TEST_CASE("layer validation and encoder specs") {
  CHECK(kind_of([] { validate_layers({}, 12); }) == ErrorKind::config);
  CHECK(kind_of([] { validate_layers({0, 3}, 12); }) == ErrorKind::config);
  CHECK(kind_of([] { validate_layers({13}, 12); }) == ErrorKind::config);
  CHECK_NOTHROW(validate_layers({1, 5, 9, 12}, 12));
  CHECK(kind_of([] { make_encoder("roberta"); }) == ErrorKind::config);
  CHECK(kind_of([] { make_encoder("bert"); }) == ErrorKind::environment);
  CHECK(kind_of([] { make_encoder("bert:/nonexistent/dir"); }) != ErrorKind::internal);
}

TEST_CASE("stub encoder is deterministic") {
  const auto a = make_encoder("stub:hidden=8,layers=3,heads=2,seed=4");
  const auto b = make_encoder("stub:hidden=8,layers=3,heads=2,seed=4");
  const auto inst = make_instance({"the", "battery", "lasts", "forever"}, 1, 1);
  const auto fa = encode(*a, inst, {1, 2, 3});
  const auto fb = encode(*b, inst, {1, 2, 3});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(fa.hidden[k].value() == fb.hidden[k].value());
    CHECK(fa.attention[k] == fb.attention[k]);
  }
  CHECK(a->id() == b->id());
  const auto c = make_encoder("stub:hidden=8,layers=3,heads=2,seed=5");
  CHECK(encode(*c, inst, {1}).hidden[0].value() != fa.hidden[0].value());
}

TEST_CASE("feature cache stores in memory and on disk") {
  const auto dir = testing::scratch_dir("feature-cache");
  const auto enc = make_encoder("stub:hidden=8,layers=2,heads=2");
  const auto inst = make_instance({"good", "food"}, 1, 1);
  const auto f = encode(*enc, inst, {1, 2});
  const auto key = FeatureCache::key(inst, enc->id(), {1, 2});
  CHECK(key != FeatureCache::key(inst, enc->id(), {2}));
  {
    FeatureCache cache(dir);
    CHECK_FALSE(cache.find(key).has_value());
    cache.store(key, f);
    CHECK(cache.find(key).has_value());
  }
  FeatureCache reopened(dir);
  const auto g = reopened.find(key);
  REQUIRE(g.has_value());
  CHECK(reopened.hits() == 1);
  CHECK(g->layers == f.layers);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(g->hidden[k].value() == f.hidden[k].value());
    CHECK(g->attention[k] == f.attention[k]);
  }
}

TEST_CASE("safetensors round trip") {
  const auto dir = testing::scratch_dir("safetensors");
  TensorMap t;
  t["a"] = {{2, 3}, {1.5, -2, 3.25, 0, 1e-3, 7}};
  t["b.bias"] = {{4}, {0.1, 0.2, 0.3, 0.4}};
  write_safetensors(dir / "f64.safetensors", t);
  const auto back = read_safetensors(dir / "f64.safetensors");
  CHECK(back.at("a").shape == t["a"].shape);
  CHECK(back.at("a").data == t["a"].data);
  CHECK(back.at("b.bias").data == t["b.bias"].data);
  write_safetensors(dir / "f32.safetensors", t, StoreType::f32);
  const auto narrow = read_safetensors(dir / "f32.safetensors");
  CHECK(narrow.at("a").data[0] == 1.5);
  CHECK(narrow.at("b.bias").data[0] == static_cast<double>(0.1f));

  std::ofstream(dir / "junk.safetensors") << "xx";
  CHECK(kind_of([&] { read_safetensors(dir / "junk.safetensors"); }) == ErrorKind::format);
}
