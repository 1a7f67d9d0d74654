// End-to-end command-line tests. Each test drives the installed binary as a
// subprocess, so argument parsing, file formats, printed output, and exit
// codes are all exercised exactly as a user would hit them.
//
// Exit-code contract: 0 success, 2 bad config/arguments/input files,
// 3 nothing satisfies the requested budget or target, 4 integrity/protocol.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "accordion/config.hpp"

namespace accordion {
namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

CmdResult run_cmd(const std::string& args) {
  const std::string cmd = std::string(ACCORDION_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  CmdResult r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  EXPECT_TRUE(f.good()) << path;
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// A server subprocess: started on an ephemeral port, reports the bound port,
// exits on its own after `sessions` connections.
struct ServeProcess {
  ServeProcess(const std::string& model, const std::string& table, int sessions) {
    const std::string cmd = std::string(ACCORDION_BIN) + " serve " + model + " " + table +
                            " --listen 127.0.0.1:0 --max-sessions " +
                            std::to_string(sessions) + " 2>/dev/null";
    pipe_ = popen(cmd.c_str(), "r");
    if (!pipe_) throw std::runtime_error("popen failed");
    char buf[256];
    if (!std::fgets(buf, sizeof buf, pipe_)) throw std::runtime_error("server printed nothing");
    const std::string line(buf);
    const std::size_t colon = line.rfind(':');
    port = std::stoi(line.substr(colon + 1));
  }
  ~ServeProcess() {
    if (pipe_) pclose(pipe_);
  }
  int wait() {
    const int status = pclose(pipe_);
    pipe_ = nullptr;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  int port = 0;

 private:
  FILE* pipe_ = nullptr;
};

// One trained pipeline (tiny config), shared by every test in the suite.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = (fs::path(::testing::TempDir()) / "accordion_cli").string();
    fs::remove_all(dir_);
    fs::create_directories(dir_);

    std::ofstream cfg(dir_ + "/tiny.cfg");
    cfg << "units_per_block = 2\n"
           "block_widths = 8,8,8\n"
           "train_samples = 120\n"
           "val_samples = 60\n"
           "test_samples = 60\n"
           "epochs = 2\n"
           "batch_size = 60\n"
           "lr_drops = 1:10\n";
    cfg.close();

    ASSERT_EQ(run_cmd("gen-data --config " + cfg_path() + " --out " + data_path()).code, 0);
    ASSERT_EQ(run_cmd("train --config " + cfg_path() + " --seed 5 --out " + run_dir()).code, 0);
    ASSERT_EQ(run_cmd("profile " + model_path() + " " + data_path() + " --out " + table_path())
                  .code,
              0);
  }

  static std::string cfg_path() { return dir_ + "/tiny.cfg"; }
  static std::string data_path() { return dir_ + "/data.acds"; }
  static std::string run_dir() { return dir_ + "/run1"; }
  static std::string model_path() { return run_dir() + "/model.acdn"; }
  static std::string table_path() { return dir_ + "/table.csv"; }

  static std::string dir_;
};

std::string CliPipeline::dir_;

}  // namespace

TEST_F(CliPipeline, GenDataIsSeedDeterministicAndBalanced) {
  const std::string a = dir_ + "/a.acds", b = dir_ + "/b.acds", c = dir_ + "/c.acds";
  EXPECT_EQ(run_cmd("gen-data --config " + cfg_path() + " --seed 3 --out " + a).code, 0);
  EXPECT_EQ(run_cmd("gen-data --config " + cfg_path() + " --seed 3 --out " + b).code, 0);
  EXPECT_EQ(run_cmd("gen-data --config " + cfg_path() + " --seed 4 --out " + c).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));

  const DataBundle bundle = load_dataset(a);
  std::vector<std::size_t> counts(bundle.spec.num_classes, 0);
  for (std::uint32_t y : bundle.train.y) counts.at(y)++;
  for (std::size_t cnt : counts) EXPECT_EQ(cnt, bundle.train.size() / counts.size());
}

TEST_F(CliPipeline, TrainIsReproducibleAndSeedSensitive) {
  const std::string again = dir_ + "/run1_again", other = dir_ + "/run_other";
  ASSERT_EQ(run_cmd("train --config " + cfg_path() + " --seed 5 --out " + again).code, 0);
  ASSERT_EQ(run_cmd("train --config " + cfg_path() + " --seed 6 --out " + other).code, 0);
  EXPECT_EQ(slurp(model_path()), slurp(again + "/model.acdn"));
  EXPECT_EQ(slurp(run_dir() + "/train_report.csv"), slurp(again + "/train_report.csv"));
  EXPECT_NE(slurp(model_path()), slurp(other + "/model.acdn"));

  // the emitted config reloads to an equivalent run description
  const ExperimentConfig c = ExperimentConfig::from_text(slurp(run_dir() + "/config.txt"));
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.epochs, 2u);
  EXPECT_EQ(c.out_dir, run_dir());
}

TEST_F(CliPipeline, TrainHonorsPolicyOverrides) {
  const std::string out = dir_ + "/run_base";
  const CmdResult r =
      run_cmd("train --config " + cfg_path() + " --policy baseline --out " + out);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("trained baseline"), std::string::npos);
  const ExperimentConfig c = ExperimentConfig::from_text(slurp(out + "/config.txt"));
  EXPECT_EQ(c.policy_kind, PolicyKind::fixed);
}

TEST_F(CliPipeline, ProfileMatchesAnInProcessRecomputation) {
  const ProfileTable t = read_table_csv(table_path());
  EXPECT_EQ(t.entries.size(), 2u * 6u);

  const LoadedContainer lc = read_container(model_path());
  EXPECT_EQ(t.model_id, lc.manifest.model_id);
  PartialModel pm = assemble(lc.manifest, lc.chunks);
  ASSERT_TRUE(pm.complete());
  const DataBundle bundle = load_dataset(data_path());
  for (const ProfileEntry& e : t.entries) {
    if (e.n % 3 != 0) continue;  // spot-check a third of the rows
    EXPECT_DOUBLE_EQ(e.error_rate, evaluate(pm.model(), {e.scheme, e.n}, bundle.val))
        << to_string(e.scheme) << " n=" << e.n;
  }
}

TEST_F(CliPipeline, ServeFetchLoopbackRoundTripsTheModel) {
  const auto t0 = std::chrono::steady_clock::now();
  ServeProcess server(model_path(), table_path(), 1);
  const std::string out = dir_ + "/fetched_full.acdn";
  const CmdResult r = run_cmd("fetch --connect 127.0.0.1:" + std::to_string(server.port) +
                              " --deadline-ms 1000 --throughput-bps 99999999 --out " + out);
  EXPECT_EQ(server.wait(), 0);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("fetched n=6/6"), std::string::npos) << r.out;

  // the fetched container holds the server's exact bytes
  EXPECT_EQ(slurp(out), slurp(model_path()));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 5.0);
}

TEST_F(CliPipeline, FetchPartialThenUpgradeCompletes) {
  const ProfileTable t = read_table_csv(table_path());
  const std::uint64_t budget_bits = t.entries[2].size_bits;  // coml n = 3
  ServeProcess server(model_path(), table_path(), 1);
  const std::string out = dir_ + "/fetched_upgraded.acdn";
  const CmdResult r = run_cmd(
      "fetch --connect 127.0.0.1:" + std::to_string(server.port) + " --deadline-ms 1000" +
      " --throughput-bps " + std::to_string(budget_bits) + " --upgrade-n 6 --out " + out);
  EXPECT_EQ(server.wait(), 0);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(out), slurp(model_path()));
}

TEST_F(CliPipeline, FetchBelowAnyConfigExitsInfeasible) {
  ServeProcess server(model_path(), table_path(), 1);
  const CmdResult r = run_cmd("fetch --connect 127.0.0.1:" + std::to_string(server.port) +
                              " --deadline-ms 1 --throughput-bps 8 --out " + dir_ + "/no.acdn");
  EXPECT_EQ(r.code, 3) << r.out;
  server.wait();
}

TEST_F(CliPipeline, SimulateIsDeterministicAndFollowsTheTable) {
  std::ofstream sc(dir_ + "/scen.cfg");
  sc << "model = " << model_path() << "\n"
     << "table = " << table_path() << "\n"
     << "deadline_ms = 1000\n"
     << "throughput_bps = 40000\n"
     << "rtt_ms = 5\n"
     << "upgrades = n:6\n";
  sc.close();

  const std::string log1 = dir_ + "/log1.csv", log2 = dir_ + "/log2.csv";
  ASSERT_EQ(run_cmd("simulate " + dir_ + "/scen.cfg --out " + log1).code, 0);
  ASSERT_EQ(run_cmd("simulate " + dir_ + "/scen.cfg --out " + log2).code, 0);
  EXPECT_EQ(slurp(log1), slurp(log2));

  std::istringstream in(slurp(log1));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "event,time_s,clock_bits,wire_bits,achievable_n,predicted_error,detail");
  std::string line, last;
  std::size_t rows = 0;
  bool saw_offer = false;
  const ProfileTable t = read_table_csv(table_path());
  const ProfileEntry expected = select_by_link(t, SkipScheme::coml, 40000, 1.0);
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("offer,", 0) == 0) {
      saw_offer = true;
      // achievable_n column carries the negotiated depth
      std::istringstream cells(line);
      std::string cell;
      for (int i = 0; i <= 4; ++i) std::getline(cells, cell, ',');
      EXPECT_EQ(std::stoul(cell), expected.n);
    }
    last = line;
  }
  EXPECT_GE(rows, 4u);
  EXPECT_TRUE(saw_offer);
  EXPECT_EQ(last.rfind("transfer_done,", 0), 0u) << last;
}

TEST_F(CliPipeline, ExportCurvesMatchesAHandAggregation) {
  // second run with a different seed, then aggregate the two tables
  const std::string run2 = dir_ + "/run2";
  ASSERT_EQ(run_cmd("train --config " + cfg_path() + " --seed 11 --out " + run2).code, 0);
  ASSERT_EQ(run_cmd("profile " + run2 + "/model.acdn " + data_path() + " --out " + dir_ +
                    "/table2.csv")
                .code,
            0);
  ASSERT_EQ(run_cmd("export-curves " + table_path() + " " + dir_ + "/table2.csv --policy coml-05" +
                    " --out " + dir_ + "/curves.csv")
                .code,
            0);

  const ProfileTable a = read_table_csv(table_path());
  const ProfileTable b = read_table_csv(dir_ + "/table2.csv");

  std::istringstream in(slurp(dir_ + "/curves.csv"));
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "scheme,policy,n,size_bits,layer_fraction,error_mean,error_std");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string scheme, policy, n_s, size_s, frac, mean_s, std_s;
    std::getline(cells, scheme, ',');
    std::getline(cells, policy, ',');
    std::getline(cells, n_s, ',');
    std::getline(cells, size_s, ',');
    std::getline(cells, frac, ',');
    std::getline(cells, mean_s, ',');
    std::getline(cells, std_s, ',');
    const ProfileEntry& ea = a.entries.at(rows);
    const ProfileEntry& eb = b.entries.at(rows);
    EXPECT_EQ(scheme, to_string(ea.scheme));
    EXPECT_EQ(policy, "coml-05");
    EXPECT_EQ(std::stoull(n_s), ea.n);
    EXPECT_EQ(std::stoull(size_s), ea.size_bits);
    const double mean = (ea.error_rate + eb.error_rate) / 2.0;
    const double sd = std::abs(ea.error_rate - eb.error_rate) / 2.0;  // population, N = 2
    EXPECT_DOUBLE_EQ(std::stod(mean_s), mean);
    EXPECT_NEAR(std::stod(std_s), sd, 1e-15);
    ++rows;
  }
  EXPECT_EQ(rows, a.entries.size());

  // a single run aggregates with a zero spread column
  ASSERT_EQ(run_cmd("export-curves " + table_path() + " --policy solo --out " + dir_ +
                    "/curves1.csv")
                .code,
            0);
  std::istringstream one(slurp(dir_ + "/curves1.csv"));
  std::getline(one, header);
  while (std::getline(one, line))
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
}

TEST_F(CliPipeline, ExitCodesFollowTheContract) {
  EXPECT_EQ(run_cmd("train --bogus-flag").code, 2);
  EXPECT_EQ(run_cmd("no-such-command").code, 2);
  EXPECT_EQ(run_cmd("train --config " + dir_ + "/missing.cfg").code, 2);
  EXPECT_EQ(run_cmd("profile " + dir_ + "/missing.acdn " + data_path() + " --out " + dir_ +
                    "/t.csv")
                .code,
            2);
  EXPECT_EQ(run_cmd("--help").code, 0);

  {  // invalid config value
    std::ofstream bad(dir_ + "/bad.cfg");
    bad << "momentum = 1.5\n";
    bad.close();
    EXPECT_EQ(run_cmd("train --config " + dir_ + "/bad.cfg").code, 2);
  }
  {  // flipping one payload byte must surface as an integrity failure
    const std::string corrupt = dir_ + "/corrupt.acdn";
    std::string bytes = slurp(model_path());
    bytes[bytes.size() - 10] ^= 0x01;
    std::ofstream(corrupt, std::ios::binary) << bytes;
    EXPECT_EQ(run_cmd("profile " + corrupt + " " + data_path() + " --out " + dir_ + "/t.csv")
                  .code,
              4);
  }
}

}  // namespace accordion
