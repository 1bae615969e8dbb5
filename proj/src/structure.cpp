#include "kinet/structure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <utility>

#include <json.hpp>

namespace kinet {

namespace {

using json = nlohmann::json;

std::string at(std::string_view what, int id) {
    return std::string(what) + " " + std::to_string(id);
}

}  // namespace

Structure::Structure(std::string name, std::vector<Joint> joints, std::vector<Bar> bars)
    : name_(std::move(name)), joints_(std::move(joints)), bars_(std::move(bars)) {
    if (bars_.empty()) throw StructureError("structure has no bars");

    std::unordered_map<int, std::size_t> joint_pos;
    for (std::size_t i = 0; i < joints_.size(); ++i) {
        const Joint& j = joints_[i];
        if (!std::isfinite(j.x) || !std::isfinite(j.y))
            throw StructureError(at("non-finite coordinate at joint", j.id));
        if (!joint_pos.emplace(j.id, i).second)
            throw StructureError(at("duplicate joint id", j.id));
    }

    std::set<int> bar_ids;
    std::set<std::pair<int, int>> pairs;
    std::vector<int> degree(joints_.size(), 0);
    for (const Bar& b : bars_) {
        if (!bar_ids.insert(b.id).second) throw StructureError(at("duplicate bar id", b.id));
        for (int end : {b.j1, b.j2}) {
            if (!joint_pos.contains(end))
                throw StructureError("bar " + std::to_string(b.id) +
                                     " references unknown joint id " + std::to_string(end));
        }
        if (b.j1 == b.j2) throw StructureError(at("bar joins a joint to itself: bar", b.id));
        const Joint& a = joints_[joint_pos[b.j1]];
        const Joint& c = joints_[joint_pos[b.j2]];
        if (a.x == c.x && a.y == c.y) throw StructureError(at("zero-length bar", b.id));
        if (!pairs.emplace(std::min(b.j1, b.j2), std::max(b.j1, b.j2)).second)
            throw StructureError(at("duplicate bar between the same joints: bar", b.id));
        ++degree[joint_pos[b.j1]];
        ++degree[joint_pos[b.j2]];
    }
    for (std::size_t i = 0; i < joints_.size(); ++i) {
        if (degree[i] == 0) throw StructureError(at("joint is not on any bar: joint", joints_[i].id));
    }
}

std::size_t Structure::joint_index(int joint_id) const {
    for (std::size_t i = 0; i < joints_.size(); ++i) {
        if (joints_[i].id == joint_id) return i;
    }
    throw StructureError(at("unknown joint id", joint_id));
}

bool Structure::has_joint(int joint_id) const {
    return std::any_of(joints_.begin(), joints_.end(),
                       [&](const Joint& j) { return j.id == joint_id; });
}

std::vector<int> Structure::joint_degrees() const {
    std::vector<int> degree(joints_.size(), 0);
    for (const Bar& b : bars_) {
        ++degree[joint_index(b.j1)];
        ++degree[joint_index(b.j2)];
    }
    return degree;
}

std::vector<int> Structure::dangling_joints() const {
    std::vector<int> out;
    const auto degree = joint_degrees();
    for (std::size_t i = 0; i < joints_.size(); ++i) {
        if (degree[i] == 1) out.push_back(joints_[i].id);
    }
    return out;
}

bool Structure::same_as(const Structure& other) const {
    auto js = joints_, jo = other.joints_;
    auto bs = bars_, bo = other.bars_;
    std::sort(js.begin(), js.end());
    std::sort(jo.begin(), jo.end());
    std::sort(bs.begin(), bs.end());
    std::sort(bo.begin(), bo.end());
    return name_ == other.name_ && js == jo && bs == bo;
}

std::string_view to_string(JointKind kind) {
    return kind == JointKind::Hinge ? "hinge" : "rigid";
}

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw StructureError(where + ": expected an object");
    for (const char* k : keys) {
        if (!obj.contains(k)) throw StructureError(where + ": missing field \"" + k + "\"");
    }
    for (const auto& item : obj.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }))
            throw StructureError(where + ": unknown field \"" + item.key() + "\"");
    }
}

int read_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw StructureError(where + ": expected an integer");
    const auto n = v.get<long long>();
    if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max())
        throw StructureError(where + ": integer out of range");
    return static_cast<int>(n);
}

double read_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw StructureError(where + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw StructureError(where + ": non-finite number");
    return d;
}

}  // namespace

Structure parse_structure(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw StructureError("malformed document at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    check_keys(doc, "document", {"name", "joints", "bars"});
    if (!doc["name"].is_string()) throw StructureError("name: expected a string");
    if (!doc["joints"].is_array()) throw StructureError("joints: expected an array");
    if (!doc["bars"].is_array()) throw StructureError("bars: expected an array");

    std::vector<Joint> joints;
    for (std::size_t i = 0; i < doc["joints"].size(); ++i) {
        const json& j = doc["joints"][i];
        const std::string where = "joints[" + std::to_string(i) + "]";
        check_keys(j, where, {"id", "x", "y", "kind"});
        Joint joint;
        joint.id = read_int(j["id"], where + ".id");
        joint.x = read_number(j["x"], where + ".x");
        joint.y = read_number(j["y"], where + ".y");
        const json& kind = j["kind"];
        if (kind == "hinge") {
            joint.kind = JointKind::Hinge;
        } else if (kind == "rigid") {
            joint.kind = JointKind::Rigid;
        } else {
            throw StructureError(where + ".kind: expected \"hinge\" or \"rigid\"");
        }
        joints.push_back(joint);
    }

    std::vector<Bar> bars;
    for (std::size_t i = 0; i < doc["bars"].size(); ++i) {
        const json& b = doc["bars"][i];
        const std::string where = "bars[" + std::to_string(i) + "]";
        check_keys(b, where, {"id", "j1", "j2"});
        bars.push_back({read_int(b["id"], where + ".id"), read_int(b["j1"], where + ".j1"),
                        read_int(b["j2"], where + ".j2")});
    }
    return Structure(doc["name"].get<std::string>(), std::move(joints), std::move(bars));
}

Structure load_structure(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StructureError("cannot open structure file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_structure(buf.str());
    } catch (const StructureError& e) {
        throw StructureError(path.string() + ": " + e.what());
    }
}

std::string serialize_structure(const Structure& s) {
    json doc = json::object();
    doc["name"] = s.name();
    doc["joints"] = json::array();
    for (const Joint& j : s.joints()) {
        doc["joints"].push_back({{"id", j.id}, {"x", j.x}, {"y", j.y}, {"kind", to_string(j.kind)}});
    }
    doc["bars"] = json::array();
    for (const Bar& b : s.bars()) {
        doc["bars"].push_back({{"id", b.id}, {"j1", b.j1}, {"j2", b.j2}});
    }
    return doc.dump(2) + "\n";
}

void save_structure(const Structure& s, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StructureError("cannot write structure file " + path.string());
    out << serialize_structure(s);
}

Structure add_binary_unit(const Structure& s, int ja, int jb, Point p, JointKind kind) {
    if (ja == jb) throw StructureError("binary unit needs two distinct joints");
    const Joint& a = s.joint(ja);
    const Joint& b = s.joint(jb);
    if (kind != JointKind::Hinge || a.kind != JointKind::Hinge || b.kind != JointKind::Hinge)
        throw StructureError("binary unit must be pin-connected: joints " + std::to_string(ja) + ", " +
                             std::to_string(jb) + " and the new apex must all be hinges");
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double cross = ex * (p.y - a.y) - ey * (p.x - a.x);
    if (std::abs(cross) < 1e-9 * (ex * ex + ey * ey))
        throw StructureError("binary unit apex is collinear with joints " + std::to_string(ja) +
                             " and " + std::to_string(jb));
    for (const Joint& j : s.joints()) {
        if (j.x == p.x && j.y == p.y)
            throw StructureError(at("binary unit apex coincides with joint", j.id));
    }

    int next_joint = 0, next_bar = 0;
    for (const Joint& j : s.joints()) next_joint = std::max(next_joint, j.id + 1);
    for (const Bar& bar : s.bars()) next_bar = std::max(next_bar, bar.id + 1);

    auto joints = s.joints();
    auto bars = s.bars();
    joints.push_back({next_joint, p.x, p.y, kind});
    bars.push_back({next_bar, ja, next_joint});
    bars.push_back({next_bar + 1, jb, next_joint});
    return Structure(s.name(), std::move(joints), std::move(bars));
}

Structure transformed(const Structure& s, double scale, double angle_rad, double dx, double dy) {
    const double c = std::cos(angle_rad), sn = std::sin(angle_rad);
    auto joints = s.joints();
    for (Joint& j : joints) {
        const double x = j.x, y = j.y;
        j.x = scale * (c * x - sn * y) + dx;
        j.y = scale * (sn * x + c * y) + dy;
    }
    return Structure(s.name(), std::move(joints), s.bars());
}

Structure with_all_joints(const Structure& s, JointKind kind) {
    auto joints = s.joints();
    for (Joint& j : joints) j.kind = kind;
    return Structure(s.name(), std::move(joints), s.bars());
}

}  // namespace kinet
