#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cli {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// Run directory guarded by a lock file. Files are written through `write`;
/// unless `commit` is called, the destructor removes everything written (and
/// the directory itself if this run created it).
class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir);
    ~OutputDir();
    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;

    const std::filesystem::path& path() const noexcept { return dir_; }
    void write(const std::string& name, const std::string& content);
    /// Writes MANIFEST (one "sha256  name" line per file, sorted) and releases the lock.
    void commit();

private:
    std::filesystem::path dir_;
    std::filesystem::path lock_;
    bool created_ = false;
    bool committed_ = false;
    std::vector<std::pair<std::string, std::string>> files_; ///< name, hash
};

} // namespace cli
