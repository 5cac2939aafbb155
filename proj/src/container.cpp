#include "malite/container.hpp"

#include "json.hpp"
#include "malite/util.hpp"

namespace malite {

namespace {

using nlohmann::json;

json featurizer_json(const FeaturizerSettings& s) {
  return {{"bins", s.hist.bins}, {"ph", s.patch.ph},  {"pw", s.patch.pw},
          {"overlap", s.patch.overlap}, {"side", s.side}, {"mode", s.rgb ? "rgb" : "gray"}};
}

FeaturizerSettings featurizer_from_json(const json& j) {
  FeaturizerSettings s;
  s.hist.bins = j.at("bins").get<int>();
  s.patch.ph = j.at("ph").get<int>();
  s.patch.pw = j.at("pw").get<int>();
  s.patch.overlap = j.at("overlap").get<double>();
  s.side = j.at("side").get<int>();
  s.rgb = j.at("mode").get<std::string>() == "rgb";
  return s;
}

std::vector<std::uint8_t> assemble(ModelKind kind, const json& meta, const std::vector<std::uint8_t>& payload) {
  ByteWriter w;
  w.str("MLTE");
  w.u8(kContainerVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u16(0);
  const std::string text = meta.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  w.u64(payload.size());
  w.bytes(payload);
  w.u32(crc32(w.buffer()));
  return w.take();
}

struct Parsed {
  ModelKind kind;
  json meta;
  std::span<const std::uint8_t> payload;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 4 + 8 + 4) fail(ErrorKind::FormatError, "model file too short");
  ByteReader r(bytes);
  if (r.str(4) != "MLTE") fail(ErrorKind::FormatError, "not a model container (bad magic)");
  const std::uint8_t version = r.u8();
  if (version != kContainerVersion) {
    fail(ErrorKind::FormatError, "unsupported container version " + std::to_string(version));
  }
  const std::uint8_t kind = r.u8();
  if (kind > 1) fail(ErrorKind::FormatError, "unknown model kind " + std::to_string(kind));
  r.u16();
  const std::uint32_t meta_len = r.u32();
  if (meta_len > r.remaining()) fail(ErrorKind::FormatError, "truncated metadata");
  const std::string meta_text = r.str(meta_len);
  const std::uint64_t payload_len = r.u64();
  if (payload_len + 4 != r.remaining()) fail(ErrorKind::FormatError, "payload length does not match file size");
  auto payload = r.bytes(static_cast<std::size_t>(payload_len));
  const std::uint32_t stored = r.u32();
  if (stored != crc32(bytes.first(bytes.size() - 4))) fail(ErrorKind::FormatError, "checksum mismatch");
  Parsed p{static_cast<ModelKind>(kind), {}, payload};
  try {
    p.meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("bad container metadata: ") + e.what());
  }
  return p;
}

}  // namespace

std::vector<std::uint8_t> save_model(const HrfModel& m) {
  json meta = {{"kind", "hrf"}, {"labels", m.labels}, {"featurizer", featurizer_json(m.features)}};
  ByteWriter payload;
  write_forest(m.forest, payload);
  return assemble(ModelKind::Hrf, meta, payload.buffer());
}

std::vector<std::uint8_t> save_model(const MnModel& m) {
  json meta = {{"kind", "mn"},
               {"labels", m.labels},
               {"side", m.side},
               {"net", json::parse(to_json(m.config()))}};
  ByteWriter payload;
  write_weights(m.net, payload);
  return assemble(ModelKind::Mn, meta, payload.buffer());
}

AnyModel load_model(std::span<const std::uint8_t> bytes) {
  Parsed p = parse(bytes);
  ByteReader r(p.payload);
  try {
    auto labels = p.meta.at("labels").get<std::vector<std::string>>();
    if (p.kind == ModelKind::Hrf) {
      HrfModel m;
      m.labels = std::move(labels);
      m.features = featurizer_from_json(p.meta.at("featurizer"));
      m.forest = read_forest(r);
      if (r.remaining() != 0) fail(ErrorKind::FormatError, "trailing bytes after forest payload");
      return m;
    }
    MnModel m(net_config_from_json(p.meta.at("net").dump()), p.meta.at("side").get<int>(), std::move(labels));
    read_weights(m.net, r);
    if (r.remaining() != 0) fail(ErrorKind::FormatError, "trailing bytes after weight payload");
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, std::string("bad container metadata: ") + e.what());
  }
}

ModelKind peek_kind(std::span<const std::uint8_t> bytes) { return parse(bytes).kind; }

bool looks_like_container(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 4 && bytes[0] == 'M' && bytes[1] == 'L' && bytes[2] == 'T' && bytes[3] == 'E';
}

}  // namespace malite
