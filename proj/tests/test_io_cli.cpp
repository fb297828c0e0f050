// Long-format CSV ingestion, label mapping, config parsing, and end-to-end
// command-line behavior (exit codes, output files, determinism).

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyadnet/io.hpp"
#include "dyadnet/rng.hpp"
#include "oracle.hpp"

using namespace dyadnet;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("DYADNET_CLI_PATH");
#ifdef DYADNET_CLI_PATH
  if (p == nullptr) p = DYADNET_CLI_PATH;
#endif
  REQUIRE(p != nullptr);
  return p;
}

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run_cmd(const std::string& cmd) {
  CmdResult res;
  FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) res.out.append(buf, got);
  const int status = pclose(pipe);
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("dyadnet_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Complete directed single-layer CSV: y = 2 const + 3 x1 (+ optional noise).
std::string directed_csv(int n, bool noisy, Rng* rng = nullptr) {
  std::ostringstream os;
  os << "sender,receiver,y,const,x1\n";
  Rng fallback(101, 1);
  Rng& r = rng ? *rng : fallback;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double x1 = r.normal();
      const double y = 2.0 + 3.0 * x1 + (noisy ? 0.5 * r.normal() : 0.0);
      os << 'a' << i << ",a" << j << ',' << format_double(y) << ",1,"
         << format_double(x1) << '\n';
    }
  return os.str();
}

}  // namespace

TEST_CASE("ingestion round-trips values through the label mapping") {
  // Rows arrive in scrambled order with string labels; every value must land
  // at the canonical position for its (layer, sender, receiver).
  std::ostringstream os;
  os << "layer,sender,receiver,y,w\n";
  struct Row {
    const char *layer, *s, *r;
    double y, w;
  };
  std::vector<Row> rows;
  int v = 0;
  for (const char* layer : {"L1", "L2"})
    for (const char* s : {"u", "v", "w"})
      for (const char* r : {"u", "v", "w"}) {
        if (std::string(s) == r) continue;
        rows.push_back({layer, s, r, 10.0 + v, 100.0 + v});
        ++v;
      }
  // Scramble deterministically.
  std::swap(rows[0], rows[7]);
  std::swap(rows[3], rows[11]);
  for (const auto& row : rows)
    os << row.layer << ',' << row.s << ',' << row.r << ',' << row.y << ','
       << row.w << '\n';

  std::istringstream in(os.str());
  auto [records, covs] = read_long_records(in);
  const IngestResult ing = ingest_records(records, covs, /*directed=*/true);

  CHECK(ing.covariate_names == std::vector<std::string>{"w"});
  REQUIRE(ing.actor_labels.size() == 3);
  REQUIRE(ing.layer_labels.size() == 2);
  CHECK(ing.data.n == 3);
  CHECK(ing.data.R == 2);

  // First-appearance order: the scrambled first row determines label 0.
  CHECK(ing.actor_labels[0] == rows[0].s);

  auto actor_id = [&](const std::string& lbl) {
    for (size_t k = 0; k < ing.actor_labels.size(); ++k)
      if (ing.actor_labels[k] == lbl) return static_cast<int>(k);
    FAIL("unknown label");
    return -1;
  };
  auto layer_id = [&](const std::string& lbl) {
    for (size_t k = 0; k < ing.layer_labels.size(); ++k)
      if (ing.layer_labels[k] == lbl) return static_cast<int>(k);
    FAIL("unknown layer");
    return -1;
  };
  for (const auto& row : rows) {
    const int pos = ing.data.position(actor_id(row.s), actor_id(row.r),
                                      layer_id(row.layer));
    CHECK(ing.data.y[pos] == row.y);
    CHECK(ing.data.X(pos, 0) == row.w);
  }
}

TEST_CASE("ingestion rejects malformed input with typed errors") {
  auto parse = [](const std::string& text, bool directed) {
    std::istringstream in(text);
    auto [records, covs] = read_long_records(in);
    return ingest_records(records, covs, directed);
  };

  // Missing one dyad: incomplete.
  CHECK_THROWS_AS(parse("sender,receiver,y\n"
                        "a,b,1\nb,a,2\na,c,3\nc,a,4\nb,c,5\n",
                        true),
                  IncompleteDataError);
  // Self relation.
  CHECK_THROWS_AS(parse("sender,receiver,y\na,a,1\nb,a,2\n", true), ParseError);
  // Duplicate directed relation.
  CHECK_THROWS_AS(parse("sender,receiver,y\na,b,1\na,b,2\nb,a,3\n", true),
                  ParseError);
  // Missing/NA numeric cell is rejected, naming the line.
  try {
    parse("sender,receiver,y\na,b,1\nb,a,NA\n", true);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  // Garbage number.
  CHECK_THROWS_AS(parse("sender,receiver,y\na,b,1\nb,a,２\n", true),
                  ParseError);
  // Field-count mismatch.
  CHECK_THROWS_AS(parse("sender,receiver,y\na,b,1,9\n", true), ParseError);
  // Bad header.
  CHECK_THROWS_AS(parse("from,to,y\na,b,1\n", true), ParseError);
  // No rows.
  CHECK_THROWS_AS(parse("sender,receiver,y\n", true), ParseError);
}

TEST_CASE("undirected ingestion accepts either one or both orientations") {
  const std::string upper =
      "sender,receiver,y\na,b,1\na,c,2\nb,c,3\n";
  std::istringstream in1(upper);
  auto [rec1, cov1] = read_long_records(in1);
  const IngestResult one = ingest_records(rec1, cov1, /*directed=*/false);
  CHECK(one.data.n == 3);
  CHECK(one.data.y.size() == 3);

  // Symmetric duplicates with agreeing values are validated and collapsed.
  const std::string both =
      "sender,receiver,y\na,b,1\nb,a,1\na,c,2\nc,a,2\nb,c,3\nc,b,3\n";
  std::istringstream in2(both);
  auto [rec2, cov2] = read_long_records(in2);
  const IngestResult two = ingest_records(rec2, cov2, false);
  CHECK(two.data.y.isApprox(one.data.y));

  // Conflicting orientations are rejected.
  const std::string conflict =
      "sender,receiver,y\na,b,1\nb,a,1.5\na,c,2\nb,c,3\n";
  std::istringstream in3(conflict);
  auto [rec3, cov3] = read_long_records(in3);
  CHECK_THROWS_AS(ingest_records(rec3, cov3, false), ParseError);
}

TEST_CASE("numeric formatting survives a round trip") {
  Rng rng(101, 2);
  for (int k = 0; k < 200; ++k) {
    const double v = std::exp(10.0 * rng.normal()) * (rng.bernoulli() ? 1 : -1);
    const std::string s = format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("coefficient table rendering") {
  Eigen::VectorXd beta(2), se(2);
  beta << 1.5, -2.0;
  se << 0.25, 0.5;
  std::ostringstream os;
  write_coefficients_csv(os, {"const", "x1"}, beta, se, 2.0);
  CHECK(os.str() ==
        "term,estimate,se,ci_lo,ci_hi\n"
        "const,1.5,0.25,1,2\n"
        "x1,-2,0.5,-3,-1\n");
}

TEST_CASE("config files: comments, duplicates, malformed lines") {
  std::istringstream ok(
      "# comment\n"
      "mode = coverage\n"
      "n= 12\n"
      "seed =9\n"
      "\n");
  const auto kv = read_config(ok);
  REQUIRE(kv.size() == 3);
  CHECK(kv[0] == std::pair<std::string, std::string>{"mode", "coverage"});
  CHECK(kv[1].second == "12");

  std::istringstream dup("a = 1\na = 2\n");
  CHECK_THROWS_AS(read_config(dup), ConfigError);
  std::istringstream nokey("= 2\n");
  CHECK_THROWS_AS(read_config(nokey), ConfigError);
  std::istringstream noeq("justtext\n");
  CHECK_THROWS_AS(read_config(noeq), ConfigError);
}

// ---- end-to-end command-line tests ------------------------------------------

TEST_CASE("cli: noiseless fit recovers coefficients and writes under --out") {
  TempDir tmp;
  write_text(tmp.file("data.csv"), directed_csv(6, /*noisy=*/false));
  const std::string outdir = tmp.file("outdir");
  const CmdResult res =
      run_cmd(cli_path() + " fit " + tmp.file("data.csv") + " --se exch --out " +
              outdir);
  CHECK(res.code == 0);

  // stdout carries the coefficient table; the same bytes land in --out.
  CHECK(res.out.rfind("term,estimate,se,ci_lo,ci_hi\n", 0) == 0);
  CHECK(read_text(outdir + "/coefficients.csv") == res.out);

  const auto doc = nlohmann::json::parse(read_text(outdir + "/params.json"));
  CHECK(doc["schema"] == "dyadnet/1");
  CHECK(doc["n_actors"] == 6);
  CHECK(doc["n_layers"] == 1);
  REQUIRE(doc["coefficients"].size() == 2);
  CHECK(doc["coefficients"][0]["term"] == "const");
  CHECK(std::abs(doc["coefficients"][0]["estimate"].get<double>() - 2.0) <
        1e-8);
  CHECK(std::abs(doc["coefficients"][1]["estimate"].get<double>() - 3.0) <
        1e-8);
  CHECK(doc["coefficients"][0]["se"].get<double>() < 1e-6);
  CHECK(doc["params"].contains("variance"));
  CHECK(doc["labels"]["actors"].size() == 6);

  // Nothing was written outside --out.
  int entries = 0;
  for (const auto& it : fs::directory_iterator(tmp.path)) {
    (void)it;
    ++entries;
  }
  CHECK(entries == 2);  // data.csv and outdir only
}

TEST_CASE("cli: variance flavors share coefficients and differ in spread") {
  TempDir tmp;
  // Sender effects create real dyadic dependence so every flavor's variance
  // estimate is comfortably positive.
  Rng rng(101, 3);
  const int n = 10;
  std::vector<double> actor(n);
  for (double& a : actor) a = 0.6 * rng.normal();
  std::ostringstream os;
  os << "sender,receiver,y,const,x1\n";
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double x1 = rng.normal();
      const double y = 2.0 + 3.0 * x1 + actor[i] + 0.3 * rng.normal();
      os << 'a' << i << ",a" << j << ',' << format_double(y) << ",1,"
         << format_double(x1) << '\n';
    }
  write_text(tmp.file("data.csv"), os.str());

  const std::string base =
      cli_path() + " fit " + tmp.file("data.csv") + " --format json --se ";
  const auto exch = nlohmann::json::parse(run_cmd(base + "exch").out);
  const auto dc = nlohmann::json::parse(run_cmd(base + "dc").out);
  const auto hc = nlohmann::json::parse(run_cmd(base + "hc").out);
  for (int c = 0; c < 2; ++c) {
    const double be = exch["coefficients"][c]["estimate"].get<double>();
    CHECK(be == dc["coefficients"][c]["estimate"].get<double>());
    CHECK(be == hc["coefficients"][c]["estimate"].get<double>());
  }
  // With sender effects in the errors, every flavor is positive here, the
  // dependence-aware flavors disagree with each other on the slope, and both
  // dwarf the diagonal-only flavor on the intercept.
  const double e0 = exch["coefficients"][0]["se"].get<double>();
  const double e1 = exch["coefficients"][1]["se"].get<double>();
  const double d1 = dc["coefficients"][1]["se"].get<double>();
  const double h0 = hc["coefficients"][0]["se"].get<double>();
  REQUIRE(e0 > 0.0);
  REQUIRE(e1 > 0.0);
  CHECK(std::abs(e1 - d1) > 1e-6 * e1);
  CHECK(e0 > 1.5 * h0);
  CHECK(exch["se"] == "exch");
  CHECK(dc["se"] == "dc");
}

TEST_CASE("cli: multi-layer fixture with cross-layer structure") {
  TempDir tmp;
  // Trade-gravity-shaped fixture: 10 actors, 3 layers, two covariates.
  Rng rng(101, 4);
  const int n = 10;
  std::vector<double> size(n), loc(n);
  for (int i = 0; i < n; ++i) {
    size[i] = 1.0 + rng.uniform();
    loc[i] = rng.normal();
  }
  std::ostringstream os;
  os << "layer,sender,receiver,y,const,logdist\n";
  for (const char* layer : {"t1", "t2", "t3"})
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double logdist = std::log(0.1 + std::abs(loc[i] - loc[j]));
        const double y = size[i] + size[j] - 0.7 * logdist + 0.3 * rng.normal();
        os << layer << ",c" << i << ",c" << j << ',' << format_double(y)
           << ",1," << format_double(logdist) << '\n';
      }
  write_text(tmp.file("trade.csv"), os.str());

  const CmdResult res = run_cmd(cli_path() + " fit " + tmp.file("trade.csv") +
                                " --se exch --array full-exch --format json");
  REQUIRE(res.code == 0);
  const auto doc = nlohmann::json::parse(res.out);
  CHECK(doc["n_layers"] == 3);
  CHECK(doc["array_structure"] == "full-exch");
  CHECK(doc["params"]["structure"] == "full-exch");
  REQUIRE(doc["params"]["blocks"].contains("within"));
  REQUIRE(doc["params"]["blocks"].contains("cross"));
  CHECK(doc["params"]["blocks"]["within"].size() == 6);
  CHECK(doc["diagnostics"]["realized_slot_count"] == 10);
  CHECK(doc["labels"]["layers"] ==
        nlohmann::json::array({"t1", "t2", "t3"}));

  // Stationary structure reports one block per lag.
  const CmdResult st = run_cmd(cli_path() + " fit " + tmp.file("trade.csv") +
                               " --se exch --array stationary --format json");
  REQUIRE(st.code == 0);
  const auto sdoc = nlohmann::json::parse(st.out);
  CHECK(sdoc["params"]["blocks"].contains("lag0"));
  CHECK(sdoc["params"]["blocks"].contains("lag2"));
  CHECK(sdoc["diagnostics"]["realized_slot_count"] == 15);
}

TEST_CASE("cli: undirected duplicates validated, conflicts rejected") {
  TempDir tmp;
  std::ostringstream ok;
  ok << "sender,receiver,y,const\n";
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      const double y = 1.0 + 0.1 * (i + j) + 0.01 * i * j;
      ok << 'a' << i << ",a" << j << ',' << format_double(y) << ",1\n";
    }
  write_text(tmp.file("und.csv"), ok.str());
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("und.csv") + " --undirected")
            .code == 0);

  std::string bad = ok.str();
  const auto pos = bad.find("a0,a1,");
  bad.replace(pos, 9, "a0,a1,9.9");
  write_text(tmp.file("bad.csv"), bad);
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("bad.csv") + " --undirected")
            .code == 2);
}

TEST_CASE("cli: distinct exit codes per failure class") {
  TempDir tmp;
  // Parse failure (missing file).
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("nope.csv")).code == 2);

  // Incomplete relational array.
  write_text(tmp.file("incomplete.csv"),
             "sender,receiver,y\na,b,1\nb,a,2\na,c,3\nc,a,4\nb,c,5\n");
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("incomplete.csv")).code == 3);

  // Rank-deficient design.
  std::ostringstream rk;
  rk << "sender,receiver,y,x1,x2\n";
  Rng rng(101, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      const double x = rng.normal();
      rk << 'a' << i << ",a" << j << ',' << format_double(rng.normal()) << ','
         << format_double(x) << ',' << format_double(2.0 * x) << '\n';
    }
  write_text(tmp.file("rank.csv"), rk.str());
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("rank.csv")).code == 4);

  // Bad flags and bad configs.
  write_text(tmp.file("ok.csv"), directed_csv(5, false));
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("ok.csv") + " --se bogus")
            .code == 6);
  CHECK(run_cmd(cli_path() + " fit " + tmp.file("ok.csv") + " --ci 1.5")
            .code == 6);
  CHECK(run_cmd(cli_path() + " frobnicate").code == 6);
  write_text(tmp.file("bad1.cfg"), "mode = coverage\nbogus_key = 1\n");
  CHECK(run_cmd(cli_path() + " simulate " + tmp.file("bad1.cfg")).code == 6);
  write_text(tmp.file("bad2.cfg"), "mode = warp-speed\n");
  CHECK(run_cmd(cli_path() + " simulate " + tmp.file("bad2.cfg")).code == 6);
  // Help exits cleanly.
  CHECK(run_cmd(cli_path() + " --help").code == 0);
}

TEST_CASE("cli: repeated runs are byte-identical") {
  TempDir tmp;
  write_text(tmp.file("data.csv"), directed_csv(7, true));
  const std::string out1 = tmp.file("r1"), out2 = tmp.file("r2");
  const std::string fit_cmd = cli_path() + " fit " + tmp.file("data.csv") +
                              " --se exch --gee --out ";
  REQUIRE(run_cmd(fit_cmd + out1).code == 0);
  REQUIRE(run_cmd(fit_cmd + out2).code == 0);
  CHECK(read_text(out1 + "/coefficients.csv") ==
        read_text(out2 + "/coefficients.csv"));
  CHECK(read_text(out1 + "/params.json") == read_text(out2 + "/params.json"));

  write_text(tmp.file("cov.cfg"),
             "mode = coverage\nn = 10\nnum_designs = 2\n"
             "reps_per_design = 25\nerrors = iid\nseed = 99\n"
             "estimators = exch\n");
  const std::string sim_cmd =
      cli_path() + " simulate " + tmp.file("cov.cfg") + " --out ";
  const CmdResult s1 = run_cmd(sim_cmd + out1);
  const CmdResult s2 = run_cmd(sim_cmd + out2);
  REQUIRE(s1.code == 0);
  REQUIRE(s2.code == 0);
  CHECK(s1.out == s2.out);
  CHECK(read_text(out1 + "/coverage_iid_n10.csv") ==
        read_text(out2 + "/coverage_iid_n10.csv"));
  CHECK(read_text(out1 + "/summary_iid_n10.csv") ==
        read_text(out2 + "/summary_iid_n10.csv"));
}

TEST_CASE("cli: reweighted fit reports its diagnostics") {
  TempDir tmp;
  Rng rng(101, 6);
  write_text(tmp.file("data.csv"), directed_csv(8, true, &rng));
  const CmdResult res = run_cmd(cli_path() + " fit " + tmp.file("data.csv") +
                                " --gee --format json");
  REQUIRE(res.code == 0);
  const auto doc = nlohmann::json::parse(res.out);
  CHECK(doc["gee"] == true);
  CHECK(doc["diagnostics"]["gee_converged"] == true);
  CHECK(doc["diagnostics"]["gee_iterations"].get<int>() >= 1);
  CHECK(doc["diagnostics"].contains("pd_shrink_events"));
}

TEST_CASE("cli: distribution-check report files") {
  TempDir tmp;
  write_text(tmp.file("rank.cfg"),
             "mode = dc-rank\nseed = 5\ngrid = 4,5\ndraws = 3\n");
  const CmdResult res = run_cmd(cli_path() + " simulate " + tmp.file("rank.cfg") +
                                " --out " + tmp.file("rep"));
  REQUIRE(res.code == 0);
  CHECK(res.out.rfind("dc-rank: PASS", 0) == 0);
  const auto doc =
      nlohmann::json::parse(read_text(tmp.file("rep") + "/theorem.json"));
  CHECK(doc["schema"] == "dyadnet/1");
  CHECK(doc["id"] == "dc-rank");
  CHECK(doc["pass"] == true);
  const std::string csv = read_text(tmp.file("rep") + "/theorem.csv");
  CHECK(csv.rfind("id,grid,stat\n", 0) == 0);
  CHECK(csv.find("dc-rank,4,") != std::string::npos);

  // require_pass turns a failed check into a nonzero exit.
  write_text(tmp.file("fail.cfg"),
             "mode = consistency\nseed = 5\ngrid = 24,8\nreps = 40\n"
             "require_pass = true\n");
  CHECK(run_cmd(cli_path() + " simulate " + tmp.file("fail.cfg")).code == 1);
}
