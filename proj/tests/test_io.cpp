#include "notmad/io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace notmad;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("notmad_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string parse_error_message(const std::string& csv) {
  try {
    dataset_from_csv(csv, "data.csv");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int t = 0; t < 1000; ++t) {
    const double v = u(rng) * std::pow(10.0, static_cast<double>(t % 40 - 20));
    EXPECT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_FALSE(parse_double("1.5x").has_value());
  EXPECT_FALSE(parse_double("").has_value());
  EXPECT_EQ(*parse_double(" +2.5 "), 2.5);
}

TEST(DatasetCsv, RoundTripIsBitExact) {
  std::mt19937_64 rng(62);
  Dataset d;
  d.X = oracle::random_matrix(20, 3, rng) * 1e-3;
  d.C = oracle::random_matrix(20, 2, rng) * 7.0;
  d.groups = std::vector<int>(20, 0);
  for (int i = 0; i < 20; ++i) (*d.groups)[static_cast<std::size_t>(i)] = i % 3 - 1;
  const Dataset back = dataset_from_csv(dataset_to_csv(d));
  EXPECT_EQ(back.X, d.X);
  EXPECT_EQ(back.C, d.C);
  EXPECT_EQ(back.groups, d.groups);
  EXPECT_EQ(dataset_to_csv(back), dataset_to_csv(d));

  d.groups.reset();
  EXPECT_FALSE(dataset_from_csv(dataset_to_csv(d)).groups.has_value());
}

TEST(DatasetCsv, NonFiniteCellNamesRowAndColumn) {
  const std::string msg = parse_error_message("x_0,x_1,c_0,c_1\n1,2,3,4\n5,6,7,inf\n");
  EXPECT_NE(msg.find("data.csv"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column c_1"), std::string::npos) << msg;
  EXPECT_NE(parse_error_message("x_0,c_0\n1,nan\n").find("non-finite"), std::string::npos);
}

TEST(DatasetCsv, MalformedInputs) {
  EXPECT_NE(parse_error_message("x_0,x_2,c_0\n1,2,3\n").find("malformed header"), std::string::npos);
  EXPECT_NE(parse_error_message("c_0,x_0\n1,2\n").find("malformed header"), std::string::npos);
  EXPECT_NE(parse_error_message("x_0,x_1\n1,2\n").find("header"), std::string::npos);
  EXPECT_NE(parse_error_message("x_0,c_0\n1,2\n3\n").find("row 2 has 1 fields"), std::string::npos);
  EXPECT_NE(parse_error_message("x_0,c_0\n1,abc\n").find("not a number"), std::string::npos);
  EXPECT_NE(parse_error_message("x_0,c_0,group\n1,2,g\n").find("not an integer"), std::string::npos);
  EXPECT_NE(parse_error_message("x_0,c_0\n").find("no data rows"), std::string::npos);
  EXPECT_NE(parse_error_message("").find("empty"), std::string::npos);
}

TEST(NetworkCsv, RoundTripAndErrors) {
  std::mt19937_64 rng(63);
  const Matrix w = oracle::random_offdiag(5, rng);
  const std::string text = network_to_csv(w);
  EXPECT_EQ(text.rfind("# notmad-network v1 p=5\n", 0), 0u);
  EXPECT_EQ(network_from_csv(text), w);
  EXPECT_THROW(network_from_csv("0,1\n1,0\n"), ParseError);
  EXPECT_THROW(network_from_csv("# notmad-network v1 p=2\n0,1\n"), ParseError);
  EXPECT_THROW(network_from_csv("# notmad-network v1 p=2\n0,1\n1,nan\n"), ParseError);
  EXPECT_THROW(network_from_csv("# notmad-network v2 p=2\n0,1\n1,0\n"), ParseError);
}

TEST(ModelJson, RoundTripIsBitExact) {
  std::mt19937_64 rng(64);
  for (auto kind : {EncoderKind::linear, EncoderKind::feedforward}) {
    TrainConfig c;
    c.encoder = kind;
    c.hidden = 4;
    c.archetypes = 3;
    c.dag_weight_growth = 1.1;
    c.dag_weight_max = 50;
    c.project_predictions = true;
    MixtureModel model = initialize_model(5, 2, c, rng);
    for (auto& w : model.dict.archetypes) w = oracle::random_offdiag(5, rng) / 3.0;
    const Json j = model_to_json(model, c);
    const LoadedModel back = model_from_json(parse_json(dump_json(j), "model.json"));
    EXPECT_EQ(flatten(back.model), flatten(model));
    EXPECT_EQ(back.model.encoder.kind(), kind);
    EXPECT_EQ(dump_json(model_to_json(back.model, back.config)), dump_json(j));
    EXPECT_EQ(back.config.dag_weight_growth, 1.1);
    EXPECT_TRUE(back.config.project_predictions);
  }
}

TEST(ModelJson, RejectsBadDocuments) {
  std::mt19937_64 rng(65);
  TrainConfig c;
  c.archetypes = 2;
  const Json good = model_to_json(initialize_model(3, 2, c, rng), c);
  Json j = good;
  j["format_version"] = 7;
  EXPECT_THROW(model_from_json(j), ParseError);
  j = good;
  j["archetypes"][0][0][0] = 1.0;  // non-zero diagonal
  EXPECT_THROW(model_from_json(j), ParseError);
  j = good;
  j.erase("K");
  EXPECT_THROW(model_from_json(j), ParseError);
  EXPECT_THROW(parse_json("{not json", "m.json"), ParseError);
}

TEST(ConfigJson, DefaultsAndUnknownFields) {
  const TrainConfig c = train_config_from_json(Json::object());
  EXPECT_EQ(c.archetypes, TrainConfig{}.archetypes);
  EXPECT_EQ(c.encoder, EncoderKind::linear);
  const TrainConfig d = train_config_from_json(Json{{"epochs", 3}, {"encoder", "feedforward"}});
  EXPECT_EQ(d.epochs, 3);
  EXPECT_EQ(d.encoder, EncoderKind::feedforward);
  EXPECT_THROW(train_config_from_json(Json{{"epoch", 3}}), ParseError);
  EXPECT_THROW(train_config_from_json(Json{{"epochs", "three"}}), ParseError);
  EXPECT_THROW(train_config_from_json(Json{{"alpha", -1}}), ParseError);
  EXPECT_THROW(train_config_from_json(Json{{"encoder", "rnn"}}), ParseError);
  const Json round = to_json(d);
  EXPECT_EQ(to_json(train_config_from_json(round)), round);
}

TEST(SynthSpecJson, RoundTrip) {
  SynthSpec s;
  s.mixing = MixingKind::one_hot;
  s.mixing_scale = 2.5;
  s.seed = 99;
  const SynthSpec back = synth_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_THROW(synth_spec_from_json(Json{{"q", 1}}), ParseError);
}

TEST(TruthJson, ReproducesNetworks) {
  SynthSpec s;
  s.p = 4;
  s.n_train = 10;
  s.n_test = 10;
  s.mixing = MixingKind::one_hot;
  const SynthTruth t = generate(s);
  const LoadedTruth back = truth_from_json(parse_json(dump_json(truth_to_json(s, t)), "truth.json"));
  const auto nets = truth_networks(back, t.test.C);
  for (std::size_t i = 0; i < nets.size(); ++i) EXPECT_EQ(nets[i], t.test_networks[i]);
}

TEST(Report, JsonAndCsvLayout) {
  EvalReport r;
  MethodReport m;
  m.method = "population";
  m.mse = summarize({1.0, 3.0});
  m.per_group = {{0, 1.5}, {1, 2.5}};
  m.structure = structure_sweep({Matrix::Zero(2, 2)}, {Matrix::Zero(2, 2)}, {0.1});
  m.archetype_recovery = 0.75;
  r.methods.push_back(m);
  const Json j = parse_json(dump_json(report_to_json(r)), "report.json");
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["methods"][0]["method"], "population");
  EXPECT_DOUBLE_EQ(j["methods"][0]["mse_mean"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j["methods"][0]["mse_variance"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j["methods"][0]["per_group_mse"]["1"].get<double>(), 2.5);
  EXPECT_DOUBLE_EQ(j["methods"][0]["archetype_recovery"].get<double>(), 0.75);
  const std::string csv = report_to_csv(r);
  EXPECT_EQ(csv.rfind("kind,method,threshold,group,metric,value\n", 0), 0u);
  EXPECT_NE(csv.find("mse,population,,,mean,2\n"), std::string::npos);
  EXPECT_NE(csv.find("group_mse,population,,0,mse,1.5\n"), std::string::npos);
  EXPECT_NE(csv.find("structure,population,0.1,,f1,1\n"), std::string::npos);
}

TEST(Files, AtomicWriteAndDigest) {
  const fs::path dir = scratch_dir("files");
  const fs::path target = dir / "nested" / "out.txt";
  write_atomic(target, "first");
  write_atomic(target, "second");
  EXPECT_EQ(read_text(target), "second");
  for (const auto& entry : fs::directory_iterator(target.parent_path()))
    EXPECT_EQ(entry.path().filename(), "out.txt");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  write_atomic(dir / "abc.txt", "abc");
  EXPECT_EQ(sha256_file(dir / "abc.txt"), sha256_hex("abc"));
  EXPECT_THROW(read_text(dir / "missing.txt"), ParseError);
  fs::remove_all(dir);
}

TEST(Manifest, HasNoVolatileFields) {
  RunManifest m;
  m.command = "train";
  m.seed = 4;
  const Json j = m.to_json();
  EXPECT_EQ(j["tool_version"], kToolVersion);
  for (auto it = j.begin(); it != j.end(); ++it) {
    EXPECT_EQ(it.key().find("time"), std::string::npos);
    EXPECT_EQ(it.key().find("host"), std::string::npos);
  }
  EXPECT_EQ(dump_json(j), dump_json(m.to_json()));
}

TEST(TrainingLog, Layout) {
  EpochRecord r{1, 0.5, 0.25, 2.0, 0.0};
  EXPECT_EQ(training_log_csv({r}), "epoch,pred_loss,mean_h,arch_l1,arch_h\n1,0.5,0.25,2,0\n");
}
