#include "topokd/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topokd::io {

namespace {

constexpr std::uint32_t kMagic = 0x43504B54;  // "TKPC"
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_cloud_text(const pc::PointCloud& cloud, const std::string& path) {
    cloud.validate();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "# fields: x y z";
    if (cloud.has_intensity()) f << " intensity";
    if (cloud.has_labels()) f << " label";
    f << "\n";
    if (cloud.has_labels()) f << "# classes: " << cloud.num_classes << "\n";
    char buf[160];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", cloud.coords[i][0], cloud.coords[i][1],
                      cloud.coords[i][2]);
        f << buf;
        if (cloud.has_intensity()) {
            std::snprintf(buf, sizeof buf, " %.17g", cloud.intensity[i]);
            f << buf;
        }
        if (cloud.has_labels()) f << ' ' << cloud.labels[i];
        f << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

pc::PointCloud load_cloud_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    pc::PointCloud cloud;
    bool has_intensity = false, has_labels = false;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.find("intensity") != std::string::npos) has_intensity = true;
            if (line.find("label") != std::string::npos) has_labels = true;
            const auto pos = line.find("classes:");
            if (pos != std::string::npos) cloud.num_classes = std::stoi(line.substr(pos + 8));
            continue;
        }
        std::stringstream ss(line);
        pc::Vec3 p;
        if (!(ss >> p[0] >> p[1] >> p[2])) throw std::runtime_error("bad point line: " + line);
        cloud.coords.push_back(p);
        double extra;
        if (has_intensity) {
            if (!(ss >> extra)) throw std::runtime_error("missing intensity: " + line);
            cloud.intensity.push_back(extra);
        }
        if (has_labels) {
            int label;
            if (!(ss >> label)) throw std::runtime_error("missing label: " + line);
            cloud.labels.push_back(label);
        }
    }
    if (cloud.has_labels() && cloud.num_classes == 0) {
        for (int l : cloud.labels) cloud.num_classes = std::max(cloud.num_classes, l + 1);
    }
    cloud.validate();
    return cloud;
}

void save_cloud_binary(const pc::PointCloud& cloud, const std::string& path) {
    cloud.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(cloud.size());
    const std::uint32_t mask = (cloud.has_intensity() ? 1u : 0u) | (cloud.has_labels() ? 2u : 0u);
    f.write(reinterpret_cast<const char*>(&kMagic), 4);
    f.write(reinterpret_cast<const char*>(&kVersion), 4);
    f.write(reinterpret_cast<const char*>(&n), 4);
    f.write(reinterpret_cast<const char*>(&mask), 4);
    for (const auto& p : cloud.coords) f.write(reinterpret_cast<const char*>(p.data()), 24);
    if (cloud.has_intensity())
        f.write(reinterpret_cast<const char*>(cloud.intensity.data()),
                static_cast<std::streamsize>(cloud.intensity.size() * 8));
    if (cloud.has_labels()) {
        const std::uint32_t k = static_cast<std::uint32_t>(cloud.num_classes);
        f.write(reinterpret_cast<const char*>(&k), 4);
        for (int l : cloud.labels) {
            const std::uint32_t u = static_cast<std::uint32_t>(l);
            f.write(reinterpret_cast<const char*>(&u), 4);
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

pc::PointCloud load_cloud_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::uint32_t magic = 0, version = 0, n = 0, mask = 0;
    f.read(reinterpret_cast<char*>(&magic), 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&n), 4);
    f.read(reinterpret_cast<char*>(&mask), 4);
    if (!f || magic != kMagic) throw std::runtime_error("not a point cloud file: " + path);
    if (version != kVersion) throw std::runtime_error("unsupported point cloud version");
    pc::PointCloud cloud;
    cloud.coords.resize(n);
    for (auto& p : cloud.coords) f.read(reinterpret_cast<char*>(p.data()), 24);
    if (mask & 1u) {
        cloud.intensity.resize(n);
        f.read(reinterpret_cast<char*>(cloud.intensity.data()), static_cast<std::streamsize>(n) * 8);
    }
    if (mask & 2u) {
        std::uint32_t k = 0;
        f.read(reinterpret_cast<char*>(&k), 4);
        cloud.num_classes = static_cast<int>(k);
        cloud.labels.resize(n);
        for (auto& l : cloud.labels) {
            std::uint32_t u = 0;
            f.read(reinterpret_cast<char*>(&u), 4);
            l = static_cast<int>(u);
        }
    }
    if (!f) throw std::runtime_error("truncated point cloud file: " + path);
    cloud.validate();
    return cloud;
}

}  // namespace topokd::io
