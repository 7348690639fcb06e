#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hemalimit/config.hpp"
#include "hemalimit/io.hpp"

using namespace hemalimit;

namespace {

const char* kConfig = R"(# reference model
[model]
n_compartments = 50
horizon = 100
death_rate = 0.005
seed = 7
samples = 11
initial_counts = stem_only: 50

[division]
family = constant
value = 0.015

[differentiation]
family = regulated   ; negative feedback
base = 0.03
feedback = 0.5
floor = 0.01

[limit]
cells = 100
hold_stem = false
)";

}  // namespace

TEST_CASE("parse a complete config") {
  const ModelConfig c = parse_config(kConfig);
  CHECK(c.n_compartments == 50);
  CHECK(c.horizon == 100.0);
  CHECK(c.seed == 7);
  CHECK(c.sample_times.size() == 11);
  CHECK(c.sample_times.back() == 100.0);
  CHECK(c.initial_counts.front() == 50);
  CHECK(c.initial_counts.size() == 50);
  CHECK(c.rates.bounds.r_hat == 0.015);
  CHECK(c.rates.bounds.m_min == 0.01);
  CHECK(c.rates.bounds.m_hat == doctest::Approx(0.03));
  CHECK(c.rates.regulated());
  CHECK(c.limit.cells == 100);
}

TEST_CASE("render then parse is a fixed point") {
  const ModelConfig c = parse_config(kConfig);
  const std::string once = render_config(c);
  const std::string twice = render_config(parse_config(once));
  CHECK(once == twice);
}

TEST_CASE("initial count forms") {
  InitialSpec scaled;
  scaled.kind = InitialSpec::Kind::stem_scaled;
  scaled.stem_scaled = 1.0;
  CHECK(scaled.counts_for(200).front() == 200);
  InitialSpec raw;
  CHECK(raw.counts_for(200).front() == 50);
  const ModelConfig c = parse_config(std::string(kConfig) + "");
  CHECK(c.with_compartments(10).initial_counts.size() == 10);
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(parse_config("[model]\nn_compartments = 2\nhorizon = 1\ndeath_rate = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nn_compartments = x\n"), ConfigError);
  std::string bad_family = kConfig;
  bad_family.replace(bad_family.find("family = constant"), 17, "family = cubic");
  CHECK_THROWS_AS(parse_config(bad_family), ConfigError);
  std::string negative = kConfig;
  negative.replace(negative.find("stem_only: 50"), 13, "1,-1,0");
  CHECK_THROWS_AS(parse_config(negative), ConfigError);
  std::string bad_horizon = kConfig;
  bad_horizon.replace(bad_horizon.find("horizon = 100"), 13, "horizon = 0");
  CHECK_THROWS_AS(parse_config(bad_horizon), ConfigError);
}

TEST_CASE("csv quoting and number formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1e-300) == "1e-300");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CsvTable t({"t", "value"});
  t.add_row(std::vector<double>{0.5, 2.0});
  CHECK(t.str() == "t,value\r\n0.5,2\r\n");
  CHECK(t.rows() == 1);
  CHECK_THROWS(t.add_row(std::vector<double>{1.0}));
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
