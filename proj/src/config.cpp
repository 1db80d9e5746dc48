// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/model/config.hpp"

#include <fstream>
#include <sstream>

namespace cmcr::model {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

std::string join_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i)
    out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  require(enc_channels.size() == 5,
          "config: enc_channels must list 5 stages (input + 4 encoder outputs)");
  require(enc_channels[0] == 2,
          "config: the input stage carries 2 real maps (one complex spectrogram)");
  for (int c : enc_channels)
    require(c >= 2 && c % 2 == 0,
            "config: every enc_channels entry must be an even count >= 2");
  require(kernel_t >= 1 && kernel_f >= 1, "config: bad kernel size");
  require(num_cm >= 1, "config: num_cm must be >= 1");
  require(alpha >= 0.0 && beta >= 0.0, "config: loss weights must be nonnegative");
  require(lr > 0.0, "config: lr must be positive");
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(epochs >= 1 || max_steps >= 1, "config: nothing to train");
  require(cm_n_rel > 0.0, "config: cm_n_rel must be positive");
  require(cm_n_rel + cm_n_irr_start <= 1.0,
          "config: cm_n_rel + cm_n_irr_start must not exceed 1");
  require(cr_eps > 0.0, "config: cr_eps must be positive");
  stft.validate();
}

nn::CmConfig ModelConfig::cm_config() const {
  nn::CmConfig c;
  c.n_rel = cm_n_rel;
  c.n_irr_start = cm_n_irr_start;
  c.reg_const = cm_reg_const;
  c.num_cm = num_cm;
  return c;
}

nn::CrConfig ModelConfig::cr_config() const {
  nn::CrConfig c;
  c.eps = cr_eps;
  return c;
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "enc_channels = " << join_int_list(enc_channels) << "\n";
  os << "kernel_t = " << kernel_t << "\n";
  os << "kernel_f = " << kernel_f << "\n";
  os << "num_cm = " << num_cm << "\n";
  os << "stft_win_len = " << stft.win_len << "\n";
  os << "stft_hop = " << stft.hop << "\n";
  os << "stft_fft_size = " << stft.fft_size << "\n";
  os << "cm_n_rel = " << cm_n_rel << "\n";
  os << "cm_n_irr_start = " << cm_n_irr_start << "\n";
  os << "cm_reg_const = " << cm_reg_const << "\n";
  os << "cr_eps = " << cr_eps << "\n";
  os << "cr_n_mels = " << cr_n_mels << "\n";
  os << "cr_embed_dim = " << cr_embed_dim << "\n";
  os << "alpha = " << alpha << "\n";
  os << "beta = " << beta << "\n";
  os << "mse_spec_domain = " << (mse_spec_domain ? 1 : 0) << "\n";
  os << "lr = " << lr << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "epochs = " << epochs << "\n";
  os << "max_steps = " << max_steps << "\n";
  os << "seed = " << seed << "\n";
  os << "ckpt_every = " << ckpt_every << "\n";
  os << "loader_threads = " << loader_threads << "\n";
  return os.str();
}

uint64_t ModelConfig::arch_fingerprint() const {
  std::ostringstream os;
  os << join_int_list(enc_channels) << "|" << kernel_t << "x" << kernel_f << "|"
     << num_cm << "|" << stft.win_len << "/" << stft.hop << "/" << stft.fft_size;
  return fnv1a64(os.str());
}

void ModelConfig::apply_line(const std::string& raw) {
  std::string line = raw;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  require(eq != std::string::npos, "config: expected `key = value`, got: " + raw);
  const std::string key = trim(line.substr(0, eq));
  const std::string val = trim(line.substr(eq + 1));
  require(!val.empty(), "config: empty value for " + key);

  if (key == "enc_channels") enc_channels = parse_int_list(val);
  else if (key == "kernel_t") kernel_t = std::stoi(val);
  else if (key == "kernel_f") kernel_f = std::stoi(val);
  else if (key == "num_cm") num_cm = std::stoi(val);
  else if (key == "stft_win_len") stft.win_len = std::stoi(val);
  else if (key == "stft_hop") stft.hop = std::stoi(val);
  else if (key == "stft_fft_size") stft.fft_size = std::stoi(val);
  else if (key == "cm_n_rel") cm_n_rel = std::stod(val);
  else if (key == "cm_n_irr_start") cm_n_irr_start = std::stod(val);
  else if (key == "cm_reg_const") cm_reg_const = std::stod(val);
  else if (key == "cr_eps") cr_eps = std::stod(val);
  else if (key == "cr_n_mels") cr_n_mels = std::stoi(val);
  else if (key == "cr_embed_dim") cr_embed_dim = std::stoi(val);
  else if (key == "alpha") alpha = std::stod(val);
  else if (key == "beta") beta = std::stod(val);
  else if (key == "mse_spec_domain") mse_spec_domain = std::stoi(val) != 0;
  else if (key == "lr") lr = std::stod(val);
  else if (key == "batch_size") batch_size = std::stoi(val);
  else if (key == "epochs") epochs = std::stoi(val);
  else if (key == "max_steps") max_steps = std::stoll(val);
  else if (key == "seed") seed = std::stoull(val);
  else if (key == "ckpt_every") ckpt_every = std::stoi(val);
  else if (key == "loader_threads") loader_threads = std::stoi(val);
  else require(false, "config: unknown key `" + key + "`");
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) cfg.apply_line(line);
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

void ModelConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "config: cannot write " + path);
  f << canonical();
}

}  // namespace cmcr::model
