#include <doctest.h>

#include <cmath>
#include <sstream>

#include "colloc/config.hpp"
#include "colloc/dataset.hpp"
#include "colloc/errors.hpp"
#include "colloc/report.hpp"

using namespace colloc;

TEST_CASE("csv parsing") {
  std::istringstream in("# comment\ntime,x,y\n0,1.5,2\n1,,NA\n2.5,3,nan\n");
  const Observations d = read_csv(in);
  CHECK(d.num_times() == 3);
  CHECK(d.num_components() == 2);
  CHECK(d.names == std::vector<std::string>{"x", "y"});
  CHECK(d.times[2] == 2.5);
  CHECK(std::isnan(d.values(1, 0)));
  CHECK(std::isnan(d.values(1, 1)));
  CHECK(d.count_observed(1) == 1);
}

TEST_CASE("csv errors carry line numbers") {
  auto fails_on = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      read_csv(in);
    } catch (const ParseError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_on("time,x\n0,1\n1,2,3\n", "line 3"));
  CHECK(fails_on("time,x\n0,1\n1,abc\n", "line 3"));
  CHECK(fails_on("time,x\n1,1\n0,2\n", "line 3"));
  CHECK(fails_on("time,x\n", "no"));
  CHECK(fails_on("year,x\n0,1\n", "line 1"));
}

TEST_CASE("csv round trip") {
  Observations d;
  d.times = {0.0, 0.1, 1.0 / 3.0};
  d.values.resize(3, 2);
  d.values << 1.0, 2.0, std::nan(""), 1e-300, 3.141592653589793, -7.0;
  d.names = {"a", "b"};
  std::stringstream io;
  write_csv(io, d);
  const Observations r = read_csv(io);
  CHECK(r.times == d.times);
  CHECK(r.names == d.names);
  CHECK(std::isnan(r.values(1, 0)));
  CHECK(r.values(1, 1) == 1e-300);
  CHECK(r.values(2, 0) == d.values(2, 0));
}

namespace {

nlohmann::json base_config() {
  return nlohmann::json::parse(R"({
    "name": "t", "model": "fn",
    "basis": {"order": 4, "L": 23},
    "quadrature": {"M": "auto", "K": 5},
    "prior": "integral",
    "lambda": {"lambda0": 1, "lambda_star": 100, "alpha": 0.1, "max": 1e6, "multiplier": 10},
    "nuts": {"iterations": 300, "warmup": 150, "seed": 3},
    "simulation": {"theta": [0.2, 0.2, 3], "x0": [-1, 1], "sigma": 0.2,
                   "times": {"start": 0, "end": 20, "count": 21}, "replications": 4, "seed": 9}
  })");
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig cfg = parse_config(base_config());
  CHECK(cfg.model == "fn");
  CHECK(cfg.fit.num_basis == 23);
  CHECK(cfg.fit.quad_outer == 0);
  CHECK(cfg.fit.quad_inner == 5);
  CHECK(cfg.fit.nuts.seed == 3);
  REQUIRE(cfg.simulation.has_value());
  CHECK(cfg.simulation->times.size() == 21);
  CHECK(cfg.simulation->sigma.size() == 2);
  const Scenario sc = cfg.scenario();
  CHECK(sc.replications == 4);
  CHECK(sc.noise_sd[1] == 0.2);
}

TEST_CASE("config rejects bad input") {
  nlohmann::json doc = base_config();
  doc["basis"]["knots"] = 3;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = base_config();
  doc["extra"] = true;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = base_config();
  doc.erase("model");
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = base_config();
  doc["model"] = "nonesuch";
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = base_config();
  doc["lambda"]["alpha"] = 2.0;
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
  doc = base_config();
  doc["simulation"]["theta"] = {0.2, 0.2};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("config serialization round trip") {
  const RunConfig a = parse_config(base_config());
  const RunConfig b = parse_config(a.to_json());
  CHECK(a.to_json() == b.to_json());
  CHECK(config_hash(a) == config_hash(b));
  RunConfig c = a;
  c.fit.nuts.seed = 4;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("fnv-1a") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}
