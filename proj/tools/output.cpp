#include "output.hpp"

#include "config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

namespace fs = std::filesystem;

namespace cli {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)), lock_(dir_ / ".lock") {
    std::error_code ec;
    created_ = fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir_.string() + "'");
    // "x" makes the open fail when the lock already exists.
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(lock_.c_str(), "wx"), &std::fclose);
    if (!f) {
        throw ConfigError("output directory '" + dir_.string() +
                          "' is locked by another run (remove " + lock_.string() +
                          " if it is stale)");
    }
}

OutputDir::~OutputDir() {
    std::error_code ec;
    if (!committed_) {
        for (const auto& [name, hash] : files_) fs::remove(dir_ / name, ec);
        fs::remove(dir_ / "MANIFEST", ec);
    }
    fs::remove(lock_, ec);
    if (!committed_ && created_) fs::remove(dir_, ec);
}

void OutputDir::write(const std::string& name, const std::string& content) {
    const fs::path target = dir_ / name;
    {
        std::ofstream out(target, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + target.string() + "'");
        out << content;
        if (!out) throw ConfigError("write failed for '" + target.string() + "'");
    }
    const std::string hash = sha256_hex(content);
    auto it = std::find_if(files_.begin(), files_.end(), [&](auto& f) { return f.first == name; });
    if (it != files_.end()) {
        it->second = hash;
    } else {
        files_.emplace_back(name, hash);
    }
}

void OutputDir::commit() {
    auto sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    std::string manifest;
    for (const auto& [name, hash] : sorted) manifest += hash + "  " + name + "\n";
    std::ofstream out(dir_ / "MANIFEST", std::ios::binary | std::ios::trunc);
    out << manifest;
    if (!out) throw ConfigError("cannot write MANIFEST");
    committed_ = true;
}

} // namespace cli
