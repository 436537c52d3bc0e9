#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>

#include "fairclust/csv.hpp"
#include "fairclust/dataset.hpp"
#include "fairclust/prob.hpp"
#include "fairclust/scm.hpp"
#include "support/testutil.hpp"

using namespace fairclust;

namespace {

SfmSchema basic_schema() {
    SfmSchema s;
    s.columns = {{"sex", Role::protected_attr, Kind::categorical},
                 {"age", Role::confounder, Kind::continuous},
                 {"occupation", Role::mediator, Kind::categorical}};
    s.x0_label = "female";
    s.x1_label = "male";
    return s;
}

std::string write_temp_csv(const std::string& name, const std::string& content) {
    const auto path = testutil::temp_dir("core") / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("load_dataset ingests a plain CSV") {
    const auto path = write_temp_csv("basic.csv",
                                     "sex,age,occupation\n"
                                     "female,34,service\n"
                                     "male,41,trade\n"
                                     "female,29,service\n");
    auto [d, report] = load_dataset(path, basic_schema());
    CHECK(d.n() == 3);
    CHECK(report.rows_dropped == 0);
    CHECK(d.column("sex").levels == std::vector<std::string>{"female", "male"});
    CHECK(d.x_code(0) == 0);
    CHECK(d.x_code(1) == 1);
    CHECK(d.column("age").values[1] == 41.0);
}

TEST_CASE("protected column with three observed levels is a schema error") {
    const auto path = write_temp_csv("three.csv",
                                     "sex,age,occupation\n"
                                     "female,34,service\n"
                                     "male,41,trade\n"
                                     "other,29,service\n");
    CHECK_THROWS_AS(load_dataset(path, basic_schema()), SchemaError);
}

TEST_CASE("missing required column is a schema error") {
    const auto path = write_temp_csv("missing.csv", "sex,age\nfemale,34\nmale,41\n");
    CHECK_THROWS_AS(load_dataset(path, basic_schema()), SchemaError);
}

TEST_CASE("unparseable numeric cells drop the row with a warning") {
    const auto path = write_temp_csv("bad.csv",
                                     "sex,age,occupation\n"
                                     "female,34,service\n"
                                     "male,not_a_number,trade\n"
                                     "male,,service\n"
                                     "male,44,trade\n");
    auto [d, report] = load_dataset(path, basic_schema());
    CHECK(d.n() == 2);
    CHECK(report.rows_dropped == 2);
    CHECK(!report.warnings.empty());
}

TEST_CASE("compas-style column roles load") {
    const auto spec = testutil::load_fixture_scm("compas_like_scm.json");
    const Dataset sample = scm::sample(spec, 500, 21);
    const auto dir = testutil::temp_dir("compas");
    export_csv(sample, (dir / "compas.csv").string());
    auto [d, report] = load_dataset((dir / "compas.csv").string(), sample.schema());
    CHECK(d.n() == 500);
    CHECK(d.schema().z_indices().size() == 1);
    CHECK(d.schema().w_indices().size() == 6);
}

TEST_CASE("load/export round-trips bit-exactly") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> value(-1e6, 1e6);
    csv::Table table;
    table.header = {"sex", "age", "occupation"};
    for (int i = 0; i < 200; ++i) {
        const double age = value(rng) * std::pow(10.0, static_cast<int>(rng() % 7) - 3);
        table.rows.push_back({rng() % 2 ? "male" : "female", fmt_double(age),
                              rng() % 2 ? "service" : "trade"});
    }
    table.rows[0][0] = "female";
    table.rows[1][0] = "male";
    const auto dir = testutil::temp_dir("roundtrip");
    csv::write_file((dir / "in.csv").string(), table);

    auto [d1, r1] = load_dataset((dir / "in.csv").string(), basic_schema());
    export_csv(d1, (dir / "out.csv").string());
    auto [d2, r2] = load_dataset((dir / "out.csv").string(), basic_schema());
    REQUIRE(d1.n() == d2.n());
    for (size_t r = 0; r < d1.n(); ++r) {
        CHECK(d1.column("age").values[r] == d2.column("age").values[r]);
        CHECK(d1.column("sex").codes[r] == d2.column("sex").codes[r]);
        CHECK(d1.column("occupation").codes[r] == d2.column("occupation").codes[r]);
    }
    export_csv(d2, (dir / "out2.csv").string());
    CHECK(testutil::read_file((dir / "out.csv").string()) ==
          testutil::read_file((dir / "out2.csv").string()));
}

TEST_CASE("csv parser handles quoting") {
    const auto table = csv::parse("a,b\n\"x,\"\"y\"\",\nz\",2\n");
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0][0] == "x,\"y\",\nz");
    CHECK(table.rows[0][1] == "2");
}

TEST_CASE("empirical_marginal matches forced arithmetic") {
    const auto path = write_temp_csv("marg.csv",
                                     "sex,age,occupation\n"
                                     "female,30,a\n"
                                     "male,31,a\n"
                                     "female,32,b\n"
                                     "male,33,b\n");
    auto [d, report] = load_dataset(path, basic_schema());
    const auto t = empirical_marginal(d, "occupation");
    REQUIRE(t.p.size() == 2);
    CHECK(t.p[0] == 0.5);
    CHECK(t.p[1] == 0.5);
}

TEST_CASE("single-level column is a degenerate marginal") {
    const auto path = write_temp_csv("single.csv",
                                     "sex,age,occupation\n"
                                     "female,30,a\n"
                                     "male,31,a\n");
    auto [d, report] = load_dataset(path, basic_schema());
    const auto t = empirical_marginal(d, "occupation");
    REQUIRE(t.p.size() == 1);
    CHECK(t.p[0] == 1.0);
}

TEST_CASE("probability tables sum to one") {
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    const Dataset d = scm::sample(spec, 5000, 3);
    for (const char* col : {"x", "z", "w"}) {
        const auto t = empirical_marginal(d, col);
        double sum = 0.0;
        for (double p : t.p) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("equal-frequency bins carry near-uniform mass") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    csv::Table table;
    table.header = {"sex", "age", "occupation"};
    for (int i = 0; i < 1000; ++i)
        table.rows.push_back({i % 2 ? "male" : "female", fmt_double(value(rng)), "a"});
    const auto dir = testutil::temp_dir("bins");
    csv::write_file((dir / "u.csv").string(), table);
    auto [d, report] = load_dataset((dir / "u.csv").string(), basic_schema());
    const auto t = empirical_marginal(d, "age");
    REQUIRE(t.p.size() == 10);
    for (double p : t.p) CHECK(std::abs(p - 0.1) <= 1.0 / 1000 + 1e-12);
}

TEST_CASE("empty conditioning cell smooths to uniform and is flagged") {
    const auto path = write_temp_csv("empty_cell.csv",
                                     "sex,age,occupation\n"
                                     "female,30,a\n"
                                     "female,31,b\n"
                                     "female,32,c\n"
                                     "male,33,a\n"
                                     "male,34,a\n"
                                     "male,35,a\n"
                                     "male,36,b\n"
                                     "male,37,b\n"
                                     "male,38,c\n");
    auto [d, report] = load_dataset(path, basic_schema());
    const auto t = empirical_conditional(d, "occupation", {{"sex", "female"}});
    CHECK(t.smoothed);
    for (double p : t.p) CHECK(p == doctest::Approx(2.0 / 6.0));

    // exact relative frequencies above the smoothing threshold
    const auto tm = empirical_conditional(d, "occupation", {{"sex", "male"}});
    CHECK(!tm.smoothed);
    CHECK(tm.p[0] == 0.5);
}

TEST_CASE("conditional tables match the reference SCM mechanisms") {
    const auto spec = testutil::load_fixture_scm("reference_scm.json");
    const Dataset d = scm::sample(spec, 50000, 7);
    const auto t00 = empirical_conditional(d, "w", {{"x", "x0"}, {"z", "z0"}});
    CHECK(std::abs(t00.p[1] - 0.25) <= 0.02);
    const auto t01 = empirical_conditional(d, "w", {{"x", "x0"}, {"z", "z1"}});
    CHECK(std::abs(t01.p[1] - 0.5) <= 0.02);
    const auto t11 = empirical_conditional(d, "w", {{"x", "x1"}, {"z", "z1"}});
    CHECK(std::abs(t11.p[1] - 0.875) <= 0.02);
}

TEST_CASE("empty dataset is rejected") {
    const auto path = write_temp_csv("empty.csv", "sex,age,occupation\n");
    CHECK_THROWS_AS(load_dataset(path, basic_schema()), ValidationError);
}

TEST_CASE("schema role partition is total and disjoint") {
    const SfmSchema s = basic_schema();
    s.validate();
    const size_t covered = s.role_indices(Role::protected_attr).size() +
                           s.role_indices(Role::confounder).size() +
                           s.role_indices(Role::mediator).size() +
                           s.role_indices(Role::ignored).size();
    CHECK(covered == s.columns.size());

    SfmSchema two_protected = s;
    two_protected.columns.push_back({"race", Role::protected_attr, Kind::categorical});
    CHECK_THROWS_AS(two_protected.validate(), SchemaError);

    SfmSchema dup = s;
    dup.columns.push_back({"age", Role::ignored, Kind::continuous});
    CHECK_THROWS_AS(dup.validate(), SchemaError);
}

TEST_CASE("schema json round-trip") {
    SfmSchema s = basic_schema();
    s.bins = 7;
    const SfmSchema back = schema_from_json(schema_to_json(s));
    CHECK(back.columns.size() == s.columns.size());
    CHECK(back.x0_label == "female");
    CHECK(back.bins == 7);
    CHECK(back.columns[1].role == Role::confounder);
}
