#include <doctest.h>

#include <filesystem>

#include "capeskit/attention/flops.hpp"
#include "capeskit/attention/params.hpp"
#include "capeskit/attention/serialize.hpp"
#include "capeskit/error.hpp"

using namespace capeskit;
using namespace capeskit::attention;

namespace {

AttentionConfig small() {
  AttentionConfig c;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.num_layers = 1;
  c.patch_size = 4;
  c.nlat = 16;
  c.nlon = 16;
  c.channels = 2;
  c.mlp_hidden = 12;
  c.num_anchors = 3;
  return c;
}

bool same(const ModelParams& a, const ModelParams& b) {
  const auto x = tensors(a), y = tensors(b);
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i].name != y[i].name || *x[i].tensor != *y[i].tensor) return false;
  return true;
}

}  // namespace

TEST_SUITE("model-io") {
  TEST_CASE("TLA1 round trip is exact") {
    AttentionConfig cfg = small();
    cfg.layout = Layout::channel_stack;
    const ModelParams p = ModelParams::init(cfg, 9);
    const std::string bytes = encode_model(cfg, p);
    CHECK(bytes.substr(0, 4) == "TLA1");
    const SavedModel m = decode_model(bytes);
    CHECK(m.config.layout == Layout::channel_stack);
    CHECK(m.config.embed_dim == 8);
    CHECK(m.config.mlp_hidden == 12);
    CHECK(same(m.params, p));
    CHECK(encode_model(m.config, m.params) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "capeskit_test_model.tla";
    save_model(path, cfg, p);
    CHECK(same(load_model(path).params, p));
    std::filesystem::remove(path);
  }

  TEST_CASE("corrupt containers are rejected") {
    const AttentionConfig cfg = small();
    const std::string bytes = encode_model(cfg, ModelParams::init(cfg, 1));
    CHECK_THROWS_AS(decode_model("XXXX" + bytes.substr(4)), ParseError);
    CHECK_THROWS_AS(decode_model(bytes.substr(0, bytes.size() - 3)), ParseError);
    CHECK_THROWS_AS(decode_model(bytes + "z"), ParseError);
    CHECK_THROWS_AS(decode_model(""), ParseError);
    CHECK_THROWS_AS(load_model("/nonexistent/model.tla"), IoError);
  }

  TEST_CASE("parameter count") {
    const AttentionConfig cfg = small();
    const std::size_t d = 8, p2 = 16, h = 12;
    const std::size_t attn = 2 * d + 4 * (d * d + d);
    const std::size_t anchor = 2 * d + 3 * d + 7 * (d * d + d);
    const std::size_t mlp = 2 * d + d * h + h + h * d + d;
    const std::size_t want = 3 * (p2 * 2 * d + d) + (2 * attn + anchor + mlp) + (d * p2 + p2);
    CHECK(parameter_count(ModelParams::init(cfg, 0)) == want);
  }
}

TEST_SUITE("flops") {
  TEST_CASE("closed forms") {
    AttentionConfig cfg = small();
    cfg.num_layers = 3;
    cfg.window_size = 2;
    cfg.num_anchors = 5;
    const std::uint64_t L = 48, d = 8;
    const FlopCount f = flop_count(cfg, L);
    CHECK(f.window == 3 * 2 * L * 4 * d);
    CHECK(f.crossvar == 3 * 2 * L * 3 * d);
    CHECK(f.anchor == 3 * 4 * L * 5 * d);
    CHECK(f.dense == 3 * 2 * L * L * d);
    CHECK(f.trilevel() == f.window + f.crossvar + f.anchor);
    cfg.layout = Layout::channel_stack;
    CHECK(flop_count(cfg, L).crossvar == 3 * 2 * L * d);
  }

  TEST_CASE("tri-level grows linearly, dense quadratically") {
    const AttentionConfig cfg = small();
    const FlopCount a = flop_count(cfg, 256), b = flop_count(cfg, 1024);
    CHECK(b.trilevel() == 4 * a.trilevel());
    CHECK(b.dense == 16 * a.dense);
  }

  TEST_CASE("rows") {
    const AttentionConfig cfg = small();
    const auto rows = format_flop_rows(flop_count(cfg, 12), 12);
    CHECK(rows.rfind("window,12,", 0) == 0);
    CHECK(rows.find("\ntrilevel,12,") != std::string::npos);
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 5);
  }

  TEST_CASE("configs for a target length") {
    AttentionConfig base = small();
    base.num_domains = 2;
    const AttentionConfig c = config_for_length(base, 256);
    CHECK(c.seq_len() == 256);
    CHECK(c.patch_rows() == 8);
    CHECK(c.patch_cols() == 16);
    CHECK(config_for_length(base, 1024).seq_len() == 1024);
    CHECK_THROWS_AS(config_for_length(base, 255), ConfigError);
    base.num_domains = 3;
    CHECK_THROWS_AS(config_for_length(base, 256), ConfigError);
  }
}
