#include "babylab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "babylab/error.hpp"

namespace babylab {

namespace {

constexpr char kMagic[8] = {'B', 'B', 'L', 'B', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "babylab-checkpoint";
  header["version"] = 1;
  header["config"] = ckpt.params.config.to_json();
  header["seed"] = ckpt.seed;
  header["step"] = ckpt.step;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : parameter_layout(ckpt.params.config)) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  if (ckpt.vocab) header["vocab"] = ckpt.vocab->to_json();
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(ckpt.params.data.data()),
              static_cast<std::streamsize>(ckpt.params.data.size() * sizeof(float)));
    if (!out) throw Error("cannot write checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot write checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("not a checkpoint file: " + path);
  }
  const std::uint64_t header_len = read_u64(in);
  if (!in || header_len > (1ULL << 32)) throw Error("corrupt checkpoint header in " + path);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw Error("truncated checkpoint " + path);

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.params.config = ModelConfig::from_json(header.at("config"));
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.step = header.at("step").get<std::uint64_t>();
    const auto layout = parameter_layout(ckpt.params.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != layout.size()) throw Error("checkpoint tensor table mismatch in " + path);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != layout[i].name ||
          tensors[i].at("shape").get<std::vector<std::size_t>>() != layout[i].shape) {
        throw Error("checkpoint tensor " + layout[i].name + " mismatch in " + path);
      }
    }
    if (header.contains("vocab")) ckpt.vocab = Vocabulary::from_json(header.at("vocab"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt checkpoint header in " + path + ": " + e.what());
  }
  ckpt.params.data.resize(count_parameters(ckpt.params.config));
  in.read(reinterpret_cast<char*>(ckpt.params.data.data()),
          static_cast<std::streamsize>(ckpt.params.data.size() * sizeof(float)));
  if (!in) throw Error("truncated checkpoint " + path);
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in checkpoint " + path);
  return ckpt;
}

}  // namespace babylab
