#include "catch_amalgamated.hpp"
#include "fixtures.hpp"

using namespace atecr;

TEST_CASE("dataset validates records on construction", "[dataset]") {
  std::vector<SubjectRecord> recs(2);
  recs[0] = {1.0, 1, 0, {}, 1.0};
  recs[1] = {2.0, 0, 1, {}, 1.0};
  REQUIRE_NOTHROW(Dataset(recs, 1, {}));

  auto bad = recs;
  bad[0].time = -1.0;
  REQUIRE_THROWS_AS(Dataset(bad, 1, {}), DomainError);
  bad = recs;
  bad[0].cause = 2;
  REQUIRE_THROWS_AS(Dataset(bad, 1, {}), DomainError);
  bad = recs;
  bad[1].weight = 0.0;
  REQUIRE_THROWS_AS(Dataset(bad, 1, {}), DomainError);
  bad = recs;
  bad[1].treated = 2;
  REQUIRE_THROWS_AS(Dataset(bad, 1, {}), DomainError);
  bad = recs;
  bad[0].covariates = {1.0};
  REQUIRE_THROWS_AS(Dataset(bad, 1, {}), DomainError);
  REQUIRE_THROWS_AS(Dataset(std::vector<SubjectRecord>{recs[0]}, 1, {}), DomainError);
}

TEST_CASE("risk set size counts subjects with time >= t", "[dataset]") {
  Dataset ds = fixtures::three_subject();
  REQUIRE(ds.risk_set_size(0.0) == 3);
  REQUIRE(ds.risk_set_size(1.0) == 3);
  REQUIRE(ds.risk_set_size(1.5) == 2);
  REQUIRE(ds.risk_set_size(3.0) == 1);
  REQUIRE(ds.risk_set_size(3.1) == 0);
  REQUIRE_THROWS_AS(ds.risk_set_size(-1.0), DomainError);
}

TEST_CASE("validate reports ties and event thresholds", "[dataset]") {
  std::vector<SubjectRecord> recs(4);
  recs[0] = {1.0, 1, 0, {}, 1.0};
  recs[1] = {1.0, 1, 0, {}, 1.0};  // tied event time
  recs[2] = {1.0, 0, 0, {}, 1.0};  // censored at the same time is fine
  recs[3] = {2.0, 2, 1, {}, 1.0};
  Dataset ds(recs, 2, {});

  ValidationReport rep = validate(ds, 2);
  REQUIRE(rep.tie_violations == std::vector<double>{1.0});
  REQUIRE(rep.events_per_cause == std::vector<std::size_t>{2, 1});
  REQUIRE_FALSE(rep.min_event_threshold_met);
  REQUIRE_FALSE(rep.warnings.empty());
  REQUIRE(has_event_ties(ds));
}

TEST_CASE("jitter breaks event ties and keeps censored times", "[dataset]") {
  std::vector<SubjectRecord> recs(5);
  recs[0] = {1.0, 1, 0, {}, 1.0};
  recs[1] = {1.0, 1, 0, {}, 1.0};
  recs[2] = {1.0, 1, 1, {}, 1.0};
  recs[3] = {1.5, 0, 0, {}, 1.0};
  recs[4] = {3.0, 1, 1, {}, 1.0};
  Dataset ds(recs, 1, {});
  REQUIRE(has_event_ties(ds));

  Dataset jit = jitter_ties(ds, 7);
  REQUIRE_FALSE(has_event_ties(jit));
  REQUIRE(jit.records()[3].time == 1.5);
  // One tied record stays put; jitter magnitude is below half the min gap.
  int unchanged = 0;
  for (int i : {0, 1, 2}) {
    const double t = jit.records()[static_cast<std::size_t>(i)].time;
    if (t == 1.0) ++unchanged;
    REQUIRE(t >= 1.0);
    REQUIRE(t < 1.25);
  }
  REQUIRE(unchanged == 1);
  // Deterministic in the seed.
  Dataset jit2 = jitter_ties(ds, 7);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(jit.records()[i].time == jit2.records()[i].time);
  }
}

TEST_CASE("csv parser maps columns and expands categoricals", "[dataset]") {
  const std::string csv =
      "time,cause,treated,age,stage,weight\n"
      "1.5,1,1,60,II,1\n"
      "2.5,0,0,50,I,2\n"
      "3.5,2,1,40,III,1\n";
  CsvSchema schema;
  schema.categorical["stage"] = "I";
  Dataset ds = parse_dataset(csv, schema);
  REQUIRE(ds.size() == 3);
  REQUIRE(ds.num_causes() == 2);
  REQUIRE(ds.covariate_names() == std::vector<std::string>{"age", "stage=II", "stage=III"});
  REQUIRE(ds.records()[0].covariates == std::vector<double>{60.0, 1.0, 0.0});
  REQUIRE(ds.records()[2].covariates == std::vector<double>{40.0, 0.0, 1.0});
  REQUIRE(ds.records()[1].weight == 2.0);

  SECTION("missing required column") {
    REQUIRE_THROWS_AS(parse_dataset("time,cause\n1,1\n2,0\n", schema), SchemaError);
  }
  SECTION("non-numeric cell is located") {
    try {
      parse_dataset("time,cause,treated\nx,1,0\n2,0,1\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("time") != std::string::npos);
      REQUIRE(std::string(e.what()).find("row 0") != std::string::npos);
    }
  }
  SECTION("cause above declared K") {
    CsvSchema s2 = schema;
    s2.num_causes_override = 1;
    REQUIRE_THROWS_AS(parse_dataset(csv, s2), DomainError);
  }
  SECTION("missing reference level") {
    CsvSchema s2;
    s2.categorical["stage"] = "IV";
    REQUIRE_THROWS_AS(parse_dataset(csv, s2), SchemaError);
  }
}

TEST_CASE("serialize then parse is the identity", "[dataset]") {
  Dataset ds = fixtures::random_dataset(40, 3, 2, 99);
  const std::string csv = serialize_dataset(ds);
  Dataset back = parse_dataset(csv, [] {
    CsvSchema s;
    s.num_causes_override = 2;
    return s;
  }());
  REQUIRE(back.size() == ds.size());
  REQUIRE(back.covariate_names() == ds.covariate_names());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(back.records()[i].time == ds.records()[i].time);
    REQUIRE(back.records()[i].cause == ds.records()[i].cause);
    REQUIRE(back.records()[i].treated == ds.records()[i].treated);
    REQUIRE(back.records()[i].weight == ds.records()[i].weight);
    REQUIRE(back.records()[i].covariates == ds.records()[i].covariates);
  }
}
