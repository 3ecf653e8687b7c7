#include <doctest.h>

#include "dctx/checkpoint.hpp"
#include "dctx/config.hpp"

#include <fstream>

using namespace dctx;

TEST_CASE("flat config parses dotted keys, comments, blanks") {
  auto cfg = FlatConfig::parse_string(
      "# experiment\n"
      "model.classifier = bclstm\n"
      "\n"
      "lr = 0.001   # trailing comment\n"
      "epochs=20\n"
      "flag = true\n");
  CHECK(cfg.require_str("model.classifier") == "bclstm");
  CHECK(cfg.get_double("lr", 0.0) == doctest::Approx(0.001));
  CHECK(cfg.get_int("epochs", 0) == 20);
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_str("absent", "dflt") == "dflt");
  CHECK_NOTHROW(cfg.reject_unconsumed());
}

TEST_CASE("unknown keys are rejected after consumption") {
  auto cfg = FlatConfig::parse_string("a = 1\nb = 2\n");
  cfg.get_int("a", 0);
  CHECK(cfg.unconsumed() == std::vector<std::string>({"b"}));
  CHECK_THROWS_AS(cfg.reject_unconsumed(), ConfigError);
}

TEST_CASE("malformed lines carry line numbers; duplicates rejected") {
  try {
    FlatConfig::parse_string("ok = 1\nbroken line\n");
    FAIL("expected");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(FlatConfig::parse_string("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS([] {
    auto c = FlatConfig::parse_string("x = notanumber\n");
    c.get_int("x", 0);
  }(), ConfigError);
}

TEST_CASE("group indices enumerate probe-style key families") {
  auto cfg = FlatConfig::parse_string(
      "probe.test.0.kind = drop\n"
      "probe.test.0.w = 5\n"
      "probe.test.1.kind = shuffle\n"
      "probe.test.10.kind = none\n"
      "other = 1\n");
  auto idx = cfg.group_indices("probe.test.");
  CHECK(idx == std::vector<std::string>({"0", "1", "10"}));
  CHECK(cfg.group_indices("probe.train.").empty());
}

TEST_CASE("checkpoint roundtrip preserves params, vocab and config") {
  Checkpoint ck;
  ck.model.classifier = Classifier::dialoguernn;
  ck.model.d_e = 7;
  ck.model.residual = true;
  ck.crf = CrfKind::global_ext;
  ck.label_set = {"x", "y", "z"};
  ck.vocab_tokens = {"hello", "world"};
  ck.embedding = Mat::Random(4, 5);
  ck.params->add("w", Mat::Random(3, 2));
  ck.params->add("b", Mat::Random(1, 2));
  save_checkpoint(ck, "tcfg_ckpt.json");
  Checkpoint back = load_checkpoint("tcfg_ckpt.json");
  CHECK(back.model.classifier == Classifier::dialoguernn);
  CHECK(back.model.d_e == 7);
  CHECK(back.model.residual);
  CHECK(back.crf == CrfKind::global_ext);
  CHECK(back.label_set == ck.label_set);
  CHECK(back.vocab_tokens == ck.vocab_tokens);
  CHECK((back.embedding - ck.embedding).norm() == doctest::Approx(0.0));
  CHECK((back.params->at("w").value - ck.params->at("w").value).norm() ==
        doctest::Approx(0.0));
  CHECK((back.params->at("b").value - ck.params->at("b").value).norm() ==
        doctest::Approx(0.0));
}

TEST_CASE("checkpoint loader rejects junk") {
  CHECK_THROWS(load_checkpoint("tcfg_missing.json"));
  {
    std::ofstream f("tcfg_bad.json");
    f << "{\"format\": \"something-else\"}\n";
  }
  CHECK_THROWS(load_checkpoint("tcfg_bad.json"));
}
