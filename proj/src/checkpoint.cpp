#include "genrank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "genrank/error.hpp"

namespace genrank {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'E', 'N', 'R', 'A', 'N', 'K', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}

void write_tensor(std::ostream& out, const model::Mat& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_tensor(std::istream& in, model::Mat& m) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw CheckpointError("truncated tensor data");
}

}  // namespace

json dims_to_json(const model::Dims& d) {
  return json{{"vocab_size", d.vocab_size}, {"d_model", d.d_model},       {"heads", d.heads},
              {"d_ff", d.d_ff},             {"enc_layers", d.enc_layers}, {"dec_layers", d.dec_layers},
              {"head_hidden", d.head_hidden}};
}

model::Dims dims_from_json(const json& j) {
  model::Dims d;
  d.vocab_size = j.at("vocab_size").get<int>();
  d.d_model = j.at("d_model").get<int>();
  d.heads = j.at("heads").get<int>();
  d.d_ff = j.at("d_ff").get<int>();
  d.enc_layers = j.at("enc_layers").get<int>();
  d.dec_layers = j.at("dec_layers").get<int>();
  d.head_hidden = j.value("head_hidden", 0);
  return d;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json header;
  header["format"] = "genrank-checkpoint";
  header["version"] = kCheckpointVersion;
  header["dims"] = dims_to_json(ck.params.dims());
  header["vocab"] = ck.vocab.tokens();
  header["config"] = ck.config;
  header["config_hash"] = ck.config_hash;
  json tensors = json::array();
  for (std::size_t i = 0; i < ck.params.tensor_count(); ++i) {
    const auto& info = ck.params.info(i);
    tensors.push_back({{"name", info.name}, {"rows", info.rows}, {"cols", info.cols}});
  }
  header["tensors"] = tensors;
  if (ck.trainer) {
    header["trainer"] = {{"phase", ck.trainer->phase},
                         {"epochs_done", ck.trainer->epochs_done},
                         {"optimizer_steps", ck.trainer->optimizer_steps},
                         {"has_moments", !ck.trainer->first_moments.empty()}};
  } else {
    header["trainer"] = nullptr;
  }
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < ck.params.tensor_count(); ++i) write_tensor(out, ck.params.tensor(i));
    if (ck.trainer && !ck.trainer->first_moments.empty()) {
      for (const auto& m : ck.trainer->first_moments) write_tensor(out, m);
      for (const auto& m : ck.trainer->second_moments) write_tensor(out, m);
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocab* expected_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a genrank checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated header");

  json header;
  model::Dims dims;
  std::vector<std::string> vocab_tokens;
  try {
    header = json::parse(text);
    dims = dims_from_json(header.at("dims"));
    vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  Vocab vocab = [&] {
    try {
      return Vocab::from_tokens(vocab_tokens);
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("bad vocabulary: ") + e.what());
    }
  }();
  if (vocab.size() != dims.vocab_size) throw CheckpointError("vocabulary size does not match dims");
  if (expected_vocab && !(*expected_vocab == vocab)) throw CheckpointError("vocabulary mismatch");

  model::ModelParams params = [&] {
    try {
      return model::ModelParams(dims);
    } catch (const DimensionMismatch& e) {
      throw CheckpointError(std::string("bad dims: ") + e.what());
    }
  }();
  const json& tensors = header.at("tensors");
  if (tensors.size() != params.tensor_count()) throw CheckpointError("tensor count mismatch");
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    const auto& info = params.info(i);
    const json& t = tensors[i];
    if (t.at("name").get<std::string>() != info.name || t.at("rows").get<int>() != info.rows ||
        t.at("cols").get<int>() != info.cols) {
      throw CheckpointError("shape mismatch for tensor " + info.name);
    }
    read_tensor(in, params.tensor(i));
  }

  Checkpoint ck{std::move(vocab), std::move(params), header.value("config", json::object()),
                header.value("config_hash", std::string()), std::nullopt};
  if (header.contains("trainer") && !header["trainer"].is_null()) {
    const json& tr = header["trainer"];
    TrainerState st;
    st.phase = tr.at("phase").get<std::string>();
    st.epochs_done = tr.at("epochs_done").get<int>();
    st.optimizer_steps = tr.at("optimizer_steps").get<std::int64_t>();
    if (tr.value("has_moments", false)) {
      for (int pass = 0; pass < 2; ++pass) {
        auto& dest = pass == 0 ? st.first_moments : st.second_moments;
        for (std::size_t i = 0; i < ck.params.tensor_count(); ++i) {
          model::Mat m(ck.params.info(i).rows, ck.params.info(i).cols);
          read_tensor(in, m);
          dest.push_back(std::move(m));
        }
      }
    }
    ck.trainer = std::move(st);
  }
  return ck;
}

}  // namespace genrank
