#include "cfrep/checkpoint.hpp"

#include <array>
#include <cstring>

#include <json.hpp>

#include "blob_io.hpp"
#include "cfrep/errors.hpp"

namespace cfrep {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'F', 'R', 'E', 'P', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    v = detail::to_le(v);
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (is.gcount() != 4) throw DataError(std::string("checkpoint truncated while reading ") + what);
    return detail::to_le(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const std::string& config_echo) {
    using nlohmann::json;
    const auto& arch = model.architecture();
    const auto named = model.params().named();
    json tensors = json::array();
    for (const auto& [name, t] : named) tensors.push_back({{"name", name}, {"shape", t.shape()}});
    const json header = {
        {"architecture", {{"image_size", arch.image_size}, {"channels", arch.channels}, {"latent_dim", arch.latent_dim}}},
        {"tensors", tensors},
        {"config_echo", config_echo}};
    const std::string text = header.dump();

    auto os = detail::open_out(path);
    os.write(kMagic.data(), kMagic.size());
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : named) detail::put_f32le(os, t.values());
    if (!os) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    using nlohmann::json;
    auto is = detail::open_in(path);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (is.gcount() != 8 || magic != kMagic) throw DataError(path.string() + " is not a cfrep checkpoint");
    const auto version = get_u32(is, "version");
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                        std::to_string(kVersion) + ")");
    }
    const auto length = get_u32(is, "header length");
    std::string text(length, '\0');
    is.read(text.data(), length);
    if (static_cast<std::uint32_t>(is.gcount()) != length) throw DataError("checkpoint header truncated");

    try {
        const json header = json::parse(text);
        Architecture arch;
        const auto& a = header.at("architecture");
        arch.image_size = a.at("image_size").get<std::size_t>();
        arch.channels = a.at("channels").get<std::vector<std::size_t>>();
        arch.latent_dim = a.at("latent_dim").get<std::size_t>();
        arch.validate();

        // Read every blob by name, then slot them into a parameter set
        // whose naming follows Parameters::named().
        std::vector<std::pair<std::string, Tensor>> blobs;
        for (const auto& t : header.at("tensors")) {
            Shape shape = t.at("shape").get<Shape>();
            Tensor tensor(shape, true);
            detail::get_f32le(is, tensor.values(), "checkpoint tensor " + t.at("name").get<std::string>());
            blobs.emplace_back(t.at("name").get<std::string>(), tensor);
        }
        if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint has trailing bytes");

        Parameters<float> params;
        const std::size_t depth = arch.channels.size();
        params.encoder_conv.resize(depth);
        params.decoder_deconv.resize(depth);
        auto slots = params.named();  // undefined handles, names only
        if (slots.size() != blobs.size()) {
            throw DataError("checkpoint holds " + std::to_string(blobs.size()) + " tensors, architecture needs " +
                            std::to_string(slots.size()));
        }
        auto find = [&](const std::string& name) -> Tensor {
            for (const auto& [n, t] : blobs) {
                if (n == name) return t;
            }
            throw DataError("checkpoint is missing tensor " + name);
        };
        for (std::size_t i = 0; i < depth; ++i) {
            const auto p = "enc.conv" + std::to_string(i);
            params.encoder_conv[i] = {find(p + ".weight"), find(p + ".bias")};
            const auto q = "dec.deconv" + std::to_string(i);
            params.decoder_deconv[i] = {find(q + ".weight"), find(q + ".bias")};
        }
        params.encoder_fc = {find("enc.fc.weight"), find("enc.fc.bias")};
        params.decoder_fc = {find("dec.fc.weight"), find("dec.fc.bias")};
        params.projection = find("pe.p");
        return Checkpoint{ModelState(arch, std::move(params)), header.at("config_echo").get<std::string>()};
    } catch (const json::exception& e) {
        throw DataError("checkpoint header is malformed: " + std::string(e.what()));
    } catch (const ShapeError& e) {
        throw DataError(std::string("checkpoint does not match its architecture: ") + e.what());
    }
}

}  // namespace cfrep
