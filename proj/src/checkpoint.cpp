#include "slmw/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "slmw/error.hpp"

namespace slmw::encoder {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kTruncated, std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string_view to_string(HeadKind kind) {
  return kind == HeadKind::kClassifier ? "classifier" : "tagger";
}

HeadKind head_kind_from(const std::string& s) {
  if (s == "classifier") return HeadKind::kClassifier;
  if (s == "tagger") return HeadKind::kTagger;
  throw Error(ErrorCode::kFormat, "unknown head kind '" + s + "'");
}

}  // namespace

void validate(const Checkpoint& checkpoint) {
  std::vector<ParameterShape> expected = parameter_shapes(checkpoint.config);
  if (checkpoint.head) {
    const auto n = static_cast<Index>(checkpoint.head->labels.size());
    if (n == 0) throw Error(ErrorCode::kShapeMismatch, "task head has no labels");
    expected.push_back({"head.weight", checkpoint.config.hidden_size, n});
    expected.push_back({"head.bias", 1, n});
  }
  if (checkpoint.vocab &&
      static_cast<int>(checkpoint.vocab->size()) != checkpoint.config.vocab_size) {
    throw Error(ErrorCode::kShapeMismatch, "embedded vocabulary has " +
                                               std::to_string(checkpoint.vocab->size()) +
                                               " tokens but config vocab_size is " +
                                               std::to_string(checkpoint.config.vocab_size));
  }
  if (expected.size() != checkpoint.parameters.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "checkpoint holds " + std::to_string(checkpoint.parameters.size()) +
                    " tensors, config implies " + std::to_string(expected.size()));
  }
  for (const auto& shape : expected) {
    if (!checkpoint.parameters.contains(shape.name)) {
      throw Error(ErrorCode::kShapeMismatch, "checkpoint lacks tensor '" + shape.name + "'");
    }
    const auto& t = checkpoint.parameters.at(shape.name);
    if (t.rows() != shape.rows || t.cols() != shape.cols) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tensor '" + shape.name + "' is " + std::to_string(t.rows()) + "x" +
                      std::to_string(t.cols()) + ", config implies " + std::to_string(shape.rows) +
                      "x" + std::to_string(shape.cols));
    }
  }
}

std::string serialize(const Checkpoint& checkpoint) {
  validate(checkpoint);
  nlohmann::ordered_json header;
  header["config"] = to_json(checkpoint.config);
  header["meta"] = {{"step", checkpoint.meta.step},
                    {"epoch", checkpoint.meta.epoch},
                    {"source", checkpoint.meta.source}};
  if (checkpoint.vocab) header["vocab"] = checkpoint.vocab->tokens();
  if (checkpoint.head) {
    header["head"] = {{"kind", to_string(checkpoint.head->kind)},
                      {"labels", checkpoint.head->labels}};
  }
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.parameters.size()));
  for (const auto& [name, tensor] : checkpoint.parameters) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(tensor.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(tensor.cols()));
    const auto& v = tensor.value();
    for (Index i = 0; i < v.size(); ++i) put_le(out, std::bit_cast<std::uint64_t>(v.data()[i]));
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic) {
    throw Error(ErrorCode::kFormat, "not a checkpoint: bad magic bytes");
  }
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersion, "checkpoint format version " + std::to_string(version) +
                                         " is not supported (expected " +
                                         std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = in.get_le<std::uint64_t>("header length");
  const auto header_text = in.take(header_len, "header");

  Checkpoint checkpoint;
  try {
    const auto header = nlohmann::json::parse(header_text);
    checkpoint.config = config_from_json(header.at("config"));
    const auto& meta = header.at("meta");
    checkpoint.meta.step = meta.at("step").get<std::int64_t>();
    checkpoint.meta.epoch = meta.at("epoch").get<std::int64_t>();
    checkpoint.meta.source = meta.at("source").get<std::string>();
    if (header.contains("vocab")) {
      checkpoint.vocab =
          tokenizer::SubwordVocabulary::from_tokens(header["vocab"].get<std::vector<std::string>>());
    }
    if (header.contains("head")) {
      TaskHead head;
      head.kind = head_kind_from(header["head"].at("kind").get<std::string>());
      head.labels = header["head"].at("labels").get<std::vector<std::string>>();
      checkpoint.head = std::move(head);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint header: ") + e.what());
  }

  const auto count = in.get_le<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = in.get_le<std::uint32_t>("tensor name length");
    const std::string name(in.take(name_len, "tensor name"));
    const auto rank = in.get_le<std::uint32_t>("tensor rank");
    if (rank != 2) {
      throw Error(ErrorCode::kShapeMismatch, "tensor '" + name + "' has unsupported rank " +
                                                 std::to_string(rank));
    }
    const auto rows = in.get_le<std::uint64_t>("tensor shape");
    const auto cols = in.get_le<std::uint64_t>("tensor shape");
    if (rows > bytes.size() || cols > bytes.size() || rows * cols * 8 > bytes.size()) {
      throw Error(ErrorCode::kTruncated, "tensor '" + name + "' is larger than the file");
    }
    Matrix value(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < value.size(); ++i) {
      value.data()[i] = std::bit_cast<double>(in.get_le<std::uint64_t>("tensor data"));
    }
    try {
      checkpoint.parameters.add(name, Tensor(std::move(value), true));
    } catch (const Error&) {
      throw Error(ErrorCode::kFormat, "duplicate tensor '" + name + "' in checkpoint");
    }
  }
  if (!in.at_end()) throw Error(ErrorCode::kFormat, "trailing bytes after checkpoint tensors");
  validate(checkpoint);
  return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kNotFound, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kNotFound, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string checkpoint_id(const Checkpoint& checkpoint) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize(checkpoint)) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << hash;
  return out.str();
}

}  // namespace slmw::encoder
