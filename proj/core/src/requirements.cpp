#include "upstage/requirements.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "toml.hpp"
#include "upstage/config.hpp"
#include "upstage/error.hpp"
#include "upstage/trace.hpp"

namespace upstage::vnv {

RequirementTree::RequirementTree(std::vector<Requirement> nodes) : nodes_(std::move(nodes)) {
    children_.resize(nodes_.size());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].id.empty()) throw ConfigInvalid("requirement[" + std::to_string(i) + "].id");
        if (!index.emplace(nodes_[i].id, i).second) throw DuplicateId(nodes_[i].id);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].parent) continue;
        auto it = index.find(*nodes_[i].parent);
        if (it == index.end()) throw ConfigInvalid("requirement[" + std::to_string(i) + "].parent " + *nodes_[i].parent);
        children_[it->second].push_back(i);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::vector<std::string> path;
        std::set<std::size_t> seen;
        std::optional<std::size_t> cur = i;
        while (cur) {
            path.push_back(nodes_[*cur].id);
            if (!seen.insert(*cur).second) {
                std::string ids;
                for (std::size_t k = 0; k < path.size(); ++k) ids += (k ? " -> " : "") + path[k];
                throw CycleDetected(ids);
            }
            cur = nodes_[*cur].parent ? std::optional(index.at(*nodes_[*cur].parent)) : std::nullopt;
        }
    }
}

std::vector<std::size_t> RequirementTree::roots() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!nodes_[i].parent) r.push_back(i);
    return r;
}

std::optional<std::size_t> RequirementTree::find(const std::string& id) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].id == id) return i;
    return std::nullopt;
}

RequirementTree parse_requirements_text(const std::string& text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw ConfigInvalid("line " + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
    }
    for (const auto& [k, _] : root)
        if (k.str() != "requirement") throw ConfigInvalid(std::string(k.str()));
    std::vector<Requirement> nodes;
    if (const auto* arr = root["requirement"].as_array()) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const std::string field = "requirement[" + std::to_string(i) + "]";
            const auto* t = (*arr)[i].as_table();
            if (!t) throw ConfigInvalid(field);
            Requirement r;
            for (const auto& [k, v] : *t) {
                const std::string key(k.str());
                if (key == "id" || key == "parent" || key == "text") {
                    const auto s = v.value<std::string>();
                    if (!s) throw ConfigInvalid(field + "." + key);
                    if (key == "id") r.id = *s;
                    else if (key == "parent") r.parent = *s;
                    else r.text = *s;
                } else if (key == "verify_by") {
                    const auto* a = v.as_array();
                    if (!a) throw ConfigInvalid(field + ".verify_by");
                    for (const auto& e : *a) {
                        const auto s = e.value<std::string>();
                        if (!s) throw ConfigInvalid(field + ".verify_by");
                        r.verify_by.push_back(*s);
                    }
                } else {
                    throw ConfigInvalid(field + "." + key);
                }
            }
            nodes.push_back(std::move(r));
        }
    } else if (root.contains("requirement")) {
        throw ConfigInvalid("requirement");
    }
    return RequirementTree(std::move(nodes));
}

RequirementTree parse_requirements(const std::filesystem::path& path) {
    return parse_requirements_text(read_text_file(path));
}

std::vector<MonitorSummary> read_results(const std::filesystem::path& dir) {
    const auto path = dir / "verdicts.csv";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigInvalid(path.string() + ": empty");
    const auto head = csv_split(line);
    auto col = [&](const std::string& name) {
        const auto it = std::find(head.begin(), head.end(), name);
        if (it == head.end()) throw ConfigInvalid(path.string() + ": missing column " + name);
        return static_cast<std::size_t>(it - head.begin());
    };
    const std::size_t c_mon = col("monitor"), c_req = col("requirements"), c_status = col("status");
    std::vector<MonitorSummary> out;
    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv_split(line);
        if (f.size() < head.size()) throw ConfigInvalid(path.string() + ": short row");
        auto [it, fresh] = index.emplace(f[c_mon], out.size());
        if (fresh) {
            MonitorSummary m;
            m.id = f[c_mon];
            std::stringstream ss(f[c_req]);
            std::string r;
            while (std::getline(ss, r, ';'))
                if (!r.empty()) m.requirements.push_back(r);
            out.push_back(m);
        }
        MonitorSummary& m = out[it->second];
        const auto v = parse_verdict(f[c_status]);
        ++m.samples;
        if (v == VerdictStatus::Pass) ++m.passes;
        if (v == VerdictStatus::Fail) ++m.fails;
        if (v == VerdictStatus::Disabled && m.status == VerdictStatus::NoData && m.passes == 0)
            m.status = VerdictStatus::Disabled;
    }
    for (auto& m : out) {
        if (m.fails) m.status = VerdictStatus::Fail;
        else if (m.passes) m.status = VerdictStatus::Pass;
    }
    return out;
}

const char* req_status_name(ReqStatus s) {
    switch (s) {
        case ReqStatus::Pass: return "pass";
        case ReqStatus::Fail: return "fail";
        case ReqStatus::Unverified: return "unverified";
    }
    return "?";
}

std::vector<ReqStatus> aggregate(const RequirementTree& tree, const std::map<std::string, VerdictStatus>& monitors) {
    const auto& nodes = tree.nodes();
    std::vector<std::optional<ReqStatus>> memo(nodes.size());
    std::function<ReqStatus(std::size_t)> eval = [&](std::size_t i) {
        if (memo[i]) return *memo[i];
        bool fail = false, unverified = false;
        for (const auto& m : nodes[i].verify_by) {
            const auto it = monitors.find(m);
            const VerdictStatus v = it == monitors.end() ? VerdictStatus::NoData : it->second;
            fail = fail || v == VerdictStatus::Fail;
            unverified = unverified || v != VerdictStatus::Pass;
        }
        for (std::size_t c : tree.children(i)) {
            const ReqStatus s = eval(c);
            fail = fail || s == ReqStatus::Fail;
            unverified = unverified || s == ReqStatus::Unverified;
        }
        if (nodes[i].verify_by.empty() && tree.children(i).empty()) unverified = true;
        memo[i] = fail ? ReqStatus::Fail : unverified ? ReqStatus::Unverified : ReqStatus::Pass;
        return *memo[i];
    };
    std::vector<ReqStatus> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) out.push_back(eval(i));
    return out;
}

namespace {

std::string upper(const char* s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string md_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|' || c == '*' || c == '_' || c == '`') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace

Report generate_report(const RequirementTree& tree, const std::vector<MonitorSummary>& monitors) {
    const auto& nodes = tree.nodes();
    std::map<std::string, VerdictStatus> verdicts;
    std::map<std::string, const MonitorSummary*> by_id;
    for (const auto& m : monitors) {
        verdicts[m.id] = m.status;
        by_id[m.id] = &m;
    }
    for (const auto& n : nodes)
        for (const auto& m : n.verify_by)
            if (!verdicts.count(m)) throw DanglingMonitorRef(m + " (requirement " + n.id + ")");

    Report rep;
    rep.status = aggregate(tree, verdicts);

    // Two-way links: monitors name requirements, requirements name monitors.
    for (const auto& m : monitors) {
        for (const auto& r : m.requirements) {
            const auto i = tree.find(r);
            if (!i) {
                rep.link_mismatches.push_back("monitor " + m.id + " names unknown requirement " + r);
            } else if (std::find(nodes[*i].verify_by.begin(), nodes[*i].verify_by.end(), m.id) ==
                       nodes[*i].verify_by.end()) {
                rep.link_mismatches.push_back("monitor " + m.id + " names " + r + ", which does not list it");
            }
        }
    }
    for (const auto& n : nodes)
        for (const auto& m : n.verify_by) {
            const auto& reqs = by_id[m]->requirements;
            if (std::find(reqs.begin(), reqs.end(), n.id) == reqs.end())
                rep.link_mismatches.push_back("requirement " + n.id + " lists " + m + ", which does not name it");
        }

    std::set<std::string> referenced;
    for (const auto& n : nodes) referenced.insert(n.verify_by.begin(), n.verify_by.end());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (rep.status[i] == ReqStatus::Unverified)
            rep.gaps.push_back("requirement " + nodes[i].id + " is unverified" +
                               (nodes[i].verify_by.empty() && tree.children(i).empty() ? " (no verify_by)" : ""));
    for (const auto& m : monitors)
        if (!referenced.count(m.id)) rep.gaps.push_back("monitor " + m.id + " verifies no requirement");

    std::ostringstream md;
    std::size_t counts[3] = {0, 0, 0};
    for (auto s : rep.status) ++counts[static_cast<int>(s)];
    std::size_t samples = 0;
    for (const auto& m : monitors) samples = std::max(samples, m.samples);
    md << "# Requirement verification report\n\n";
    md << "Samples: " << samples << ". Requirements: " << nodes.size() << " (" << counts[0] << " pass, " << counts[1]
       << " fail, " << counts[2] << " unverified). Monitors: " << monitors.size() << ".\n\n";
    md << "## Requirement tree\n\n";
    std::function<void(std::size_t, int)> emit = [&](std::size_t i, int depth) {
        md << std::string(2 * depth, ' ') << "- **" << md_escape(nodes[i].id) << "** ["
           << upper(req_status_name(rep.status[i])) << "] " << md_escape(nodes[i].text);
        if (!nodes[i].verify_by.empty()) {
            md << " (";
            for (std::size_t k = 0; k < nodes[i].verify_by.size(); ++k) {
                const auto& m = nodes[i].verify_by[k];
                md << (k ? ", " : "") << md_escape(m) << ": " << verdict_name(verdicts[m]);
            }
            md << ")";
        }
        md << '\n';
        for (std::size_t c : tree.children(i)) emit(c, depth + 1);
    };
    for (std::size_t r : tree.roots()) emit(r, 0);

    md << "\n## Coverage matrix\n\n| Monitor |";
    for (const auto& n : nodes) md << ' ' << md_escape(n.id) << " |";
    md << " Verdict | Pass | Fail |\n|---|";
    for (std::size_t i = 0; i < nodes.size(); ++i) md << ":-:|";
    md << "---|--:|--:|\n";
    std::ostringstream cov;
    cov << "monitor,verdict,passes,fails,samples";
    for (const auto& n : nodes) cov << ',' << csv_quote(n.id);
    cov << '\n';
    for (const auto& m : monitors) {
        md << "| " << md_escape(m.id) << " |";
        cov << csv_quote(m.id) << ',' << verdict_name(m.status) << ',' << m.passes << ',' << m.fails << ','
            << m.samples;
        for (const auto& n : nodes) {
            const bool x = std::find(n.verify_by.begin(), n.verify_by.end(), m.id) != n.verify_by.end();
            md << (x ? " x |" : "  |");
            cov << ',' << (x ? "x" : "");
        }
        md << ' ' << verdict_name(m.status) << " | " << m.passes << " | " << m.fails << " |\n";
        cov << '\n';
    }
    rep.coverage_csv = cov.str();

    md << "\n## Gaps\n\n";
    if (rep.gaps.empty()) md << "None.\n";
    for (const auto& g : rep.gaps) md << "- " << md_escape(g) << '\n';
    md << "\n## Link consistency\n\n";
    if (rep.link_mismatches.empty()) md << "All requirement and monitor links agree.\n";
    for (const auto& g : rep.link_mismatches) md << "- " << md_escape(g) << '\n';
    rep.markdown = md.str();

    std::ostringstream rq;
    rq << "id,parent,status,verify_by\n";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::string vb;
        for (std::size_t k = 0; k < nodes[i].verify_by.size(); ++k) vb += (k ? ";" : "") + nodes[i].verify_by[k];
        rq << csv_quote(nodes[i].id) << ',' << csv_quote(nodes[i].parent.value_or("")) << ','
           << req_status_name(rep.status[i]) << ',' << csv_quote(vb) << '\n';
    }
    rep.requirements_csv = rq.str();
    return rep;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::pair<const char*, const std::string*> files[] = {
        {"report.md", &report.markdown}, {"requirements.csv", &report.requirements_csv},
        {"coverage.csv", &report.coverage_csv}};
    for (const auto& [name, text] : files) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / name).string());
        os << *text;
    }
}

}  // namespace upstage::vnv
