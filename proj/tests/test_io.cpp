#include <bgnmf/errors.hpp>
#include <bgnmf/io.hpp>

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

using namespace bgnmf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const char* root = std::getenv("BGNMF_TEST_TMP");
    const fs::path dir = fs::path(root ? root : "tmp_io") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

bool same(const GigMatrix& a, const GigMatrix& b) {
    return a.params().gamma == b.params().gamma && a.params().rho == b.params().rho &&
           a.params().tau == b.params().tau;
}

} // namespace

TEST_CASE("number formatting round-trips") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> exponent(-300.0, 300.0);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::pow(10.0, exponent(rng)) * (i % 2 ? 1.0 : 0.3);
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK(parse_double("+2.5") == 2.5);
    CHECK(parse_double("1e-3") == 0.001);
    CHECK(std::isinf(parse_double("inf")));
    CHECK_THROWS_AS(parse_double(""), DataError);
    CHECK_THROWS_AS(parse_double("1.0x"), DataError);
    CHECK(parse_integer("+12") == 12);
    CHECK_THROWS_AS(parse_integer("1.5"), DataError);
    const auto f = split_csv("a,,b\r");
    REQUIRE(f.size() == 3);
    CHECK(f[1].empty());
    CHECK(f[2] == "b");
}

TEST_CASE("posterior round-trip") {
    const fs::path dir = scratch("posterior");
    Hyperparams h;
    h.J = 2;
    GroupedDataset d;
    d.subjects.push_back({"a", Matrix::Ones(5, 7), cyclic_labels(7, 3, 1)});
    d.subjects.push_back({"b", Matrix::Ones(5, 4), cyclic_labels(4, 3, 1)});
    Posterior post = init_posterior(h, d, 11);
    GigParamMatrix p = post.common.params();
    p.tau(2, 1) = 0.0;
    p.gamma(0, 0) = 2.0 / 3.0;
    post.common.assign(p);

    write_posterior(dir / "p.csv", post);
    const auto rows = lines_of(dir / "p.csv");
    CHECK(rows[0] == "factor,subject,row,col,gamma,rho,tau");
    CHECK(rows.size() == 1 + 5 * 3 + 2 * 5 * 2 + 2 * 7 + 2 * 4);
    CHECK(rows[1].rfind("A_C,0,1,1,", 0) == 0);

    const Posterior back = read_posterior(dir / "p.csv");
    CHECK(same(back.common, post.common));
    REQUIRE(back.individual.size() == 2);
    for (int l = 0; l < 2; ++l) {
        CHECK(same(back.individual[l], post.individual[l]));
        CHECK(same(back.activations[l], post.activations[l]));
    }
    CHECK(back.common.mean() == post.common.mean());

    // Dropping a line leaves a hole.
    std::ofstream cut(dir / "cut.csv");
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) cut << rows[i] << '\n';
    cut.close();
    CHECK_THROWS_AS(read_posterior(dir / "cut.csv"), DataError);
    write_text(dir / "head.csv", "factor,subject,row\n");
    CHECK_THROWS_AS(read_posterior(dir / "head.csv"), DataError);
    write_text(dir / "bad.csv", "factor,subject,row,col,gamma,rho,tau\nA_X,0,1,1,1,1,1\n");
    CHECK_THROWS_AS(read_posterior(dir / "bad.csv"), DataError);
}

TEST_CASE("trace round-trip") {
    const fs::path dir = scratch("trace");
    const std::vector<TracePoint> trace{{0, -1234.5678901234, 0.0}, {1, -1000.0 / 3.0, 1.25}};
    write_trace(dir / "t.csv", trace);
    const auto back = read_trace(dir / "t.csv");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].iter == trace[i].iter);
        CHECK(back[i].elbo == trace[i].elbo);
        CHECK(back[i].wall_ms == trace[i].wall_ms);
    }
}

TEST_CASE("predictions table") {
    const fs::path dir = scratch("pred");
    Prediction p;
    p.labels = {{1, 2}, {2}};
    p.scores = {Matrix{{0.5, 3.0}, {1.0, 0.25}}, Matrix{{9.0}, {0.0}}};
    write_predictions(dir / "p.csv", p);
    CHECK(lines_of(dir / "p.csv") ==
          std::vector<std::string>{"subject,frame,label,d_1,d_2", "1,1,1,0.5,1", "1,2,2,3,0.25", "2,1,2,9,0"});
}

TEST_CASE("evaluation report as JSON") {
    const fs::path dir = scratch("json");
    EvalReport r;
    r.subject_accuracy = {0.5, 1.0};
    r.subject_frames = {4, 2};
    r.pooled_accuracy = 4.0 / 6.0;
    r.confusion = (CountMatrix(2, 2) << 2, 1, 1, 2).finished();
    write_json(dir / "e.json", to_json(r));
    std::ifstream in(dir / "e.json");
    const nlohmann::json doc = nlohmann::json::parse(in);
    CHECK(doc["pooled_accuracy"].get<double>() == r.pooled_accuracy);
    CHECK(doc["subject_accuracy"] == nlohmann::json({0.5, 1.0}));
    CHECK(doc["subject_frames"] == nlohmann::json({4, 2}));
    CHECK(doc["confusion"] == nlohmann::json({{2, 1}, {1, 2}}));
}

TEST_CASE("learning curve table") {
    const fs::path dir = scratch("curve");
    std::vector<LearningCurvePoint> curve(4);
    const double fractions[] = {0.25, 0.5, 0.75, 1.0};
    for (int i = 0; i < 4; ++i) {
        curve[i].fraction = fractions[i];
        curve[i].report.subject_accuracy = {0.5, 0.75, 1.0};
        curve[i].report.pooled_accuracy = 0.75;
    }
    write_learning_curve(dir / "c.csv", curve);
    const auto rows = lines_of(dir / "c.csv");
    CHECK(rows.size() == 1 + 4 * (3 + 1));
    CHECK(rows[0] == "fraction,subject,accuracy,pooled");
    CHECK(rows[1] == "0.25,1,0.5,0.75");
    CHECK(rows[4] == "0.25,pooled,0.75,0.75");
    CHECK(rows.back() == "1,pooled,0.75,0.75");
}
