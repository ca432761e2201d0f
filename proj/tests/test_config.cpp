#include <cstdlib>

#include "doctest.h"
#include "lloca/config.hpp"
#include "lloca/errors.hpp"

using namespace lloca;

TEST_CASE("key=value parsing")
{
    const auto kv = parse_key_values("# comment\nseed = 3\n\n model.hidden_dim=64 # trailing\n");
    CHECK(kv.size() == 2);
    CHECK(kv.at("seed") == "3");
    CHECK(kv.at("model.hidden_dim") == "64");
    CHECK_THROWS_AS(parse_key_values("seed 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("seed=1\nseed=2\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("=2\n"), ConfigError);
}

TEST_CASE("run config")
{
    unsetenv("LLOCA_SEED");
    const RunConfig c = run_config_from(parse_key_values("seed=4\nmodel.hidden_dim=32\nmodel.num_heads=2\n"
                                                         "frames.policy=learned-gs4\ntrain.lr=0.002\n"));
    CHECK(c.seed == 4);
    CHECK(c.train.seed == 4);
    CHECK(c.split_seed == 4);
    CHECK(c.model.hidden_dim == 32);
    CHECK(c.policy.kind == PolicyKind::Learned);
    CHECK(c.policy.constructor == FrameConstructor::GS4);
    CHECK(c.train.adam.lr == 0.002);
    CHECK(c.train.adam.beta1 == 0.99);

    CHECK_THROWS_AS(run_config_from(parse_key_values("model.hidden_dim=32\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("seed=1\nmodel.colour=red\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("seed=1\ntrain.lr=fast\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("seed=1\nmodel.hidden_dim=100\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("seed=1\nmodel.head_spec=3y1\n")), ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("seed=1\nframes.modified=maybe\n")), ConfigError);
}

TEST_CASE("environment seed override")
{
    setenv("LLOCA_SEED", "77", 1);
    CHECK(run_config_from(parse_key_values("seed=4\n")).seed == 77);
    CHECK(run_config_from(parse_key_values("seed=4\n"), false).seed == 4);
    CHECK(run_config_from(parse_key_values("model.num_blocks=1\n")).seed == 77);
    unsetenv("LLOCA_SEED");
}

TEST_CASE("canonical text round trip")
{
    unsetenv("LLOCA_SEED");
    RunConfig c = run_config_from(parse_key_values("seed=9\nframes.policy=augment\nframes.augment_sigma=0.05\n"
                                                   "frames.references=true\nmodel.metric=euclidean\n"));
    c.stats = Standardization{0.25, 1.5};
    c.momentum_scale = 0.875;
    const RunConfig r = run_config_from(parse_key_values(to_text(c)));
    CHECK(to_text(r) == to_text(c));
    CHECK(r.policy.kind == PolicyKind::Augment);
    CHECK(r.policy.augment_sigma == 0.05);
    CHECK(r.frames.references.size() == 3);
    CHECK(r.model.metric == AttentionMetric::Euclidean);
    REQUIRE(r.stats.has_value());
    CHECK(r.stats->std == 1.5);
    CHECK(*r.momentum_scale == 0.875);
}
