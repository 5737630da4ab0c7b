// Reader for the bus/gen/branch/gencost subset of MATPOWER case files.

#include "rtlmp/case_model.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <string>
#include <vector>

namespace rtlmp::detail {

namespace {

struct Table {
    std::vector<std::vector<double>> rows;
    std::vector<int> lines;   // source line of each row
};

std::string strip_comment(const std::string& line) {
    auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

std::vector<double> parse_numbers(const std::string& text, int line_no) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ';') {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != ',' &&
               text[j] != ';')
            ++j;
        std::string token = text.substr(i, j - i);
        double value = 0.0;
        if (token == "Inf" || token == "inf") {
            value = kInf;
        } else {
            auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
            if (ec != std::errc() || ptr != token.data() + token.size())
                throw ParseError("line " + std::to_string(line_no), "bad number '" + token + "'");
        }
        out.push_back(value);
        i = j;
    }
    return out;
}

double column(const Table& t, std::size_t row, std::size_t col, const char* table) {
    if (col >= t.rows[row].size())
        throw ParseError("line " + std::to_string(t.lines[row]),
                         std::string("mpc.") + table + " row has too few columns (need " + std::to_string(col + 1) + ")");
    return t.rows[row][col];
}

}  // namespace

PowerCase parse_matpower_grid(std::string_view text) {
    std::map<std::string, Table> tables;
    std::map<std::string, double> scalars;

    std::string current;   // table being read
    int line_no = 0;
    std::size_t pos = 0;
    const std::string src(text);
    while (pos <= src.size()) {
        auto end = src.find('\n', pos);
        if (end == std::string::npos) end = src.size();
        std::string line = strip_comment(src.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;

        if (current.empty()) {
            auto mpc = line.find("mpc.");
            if (mpc == std::string::npos) continue;
            auto eq = line.find('=', mpc);
            if (eq == std::string::npos) continue;
            std::string name = line.substr(mpc + 4, eq - mpc - 4);
            while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
            std::string rhs = line.substr(eq + 1);
            auto open = rhs.find('[');
            if (open == std::string::npos) {
                if (rhs.find('\'') != std::string::npos) continue;   // mpc.version = '2';
                auto nums = parse_numbers(rhs, line_no);
                if (nums.size() != 1) throw ParseError("line " + std::to_string(line_no), "expected scalar for mpc." + name);
                scalars[name] = nums.front();
                continue;
            }
            current = name;
            tables[current];
            line = rhs.substr(open + 1);
        }
        auto close = line.find(']');
        std::string body = close == std::string::npos ? line : line.substr(0, close);
        // A row may span a line or several rows may share one; ';' separates rows.
        std::size_t start = 0;
        while (start <= body.size()) {
            auto semi = body.find(';', start);
            std::string chunk = body.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
            auto nums = parse_numbers(chunk, line_no);
            if (!nums.empty()) {
                tables[current].rows.push_back(std::move(nums));
                tables[current].lines.push_back(line_no);
            }
            if (semi == std::string::npos) break;
            start = semi + 1;
        }
        if (close != std::string::npos) current.clear();
    }
    if (!current.empty()) throw ParseError("line " + std::to_string(line_no), "unterminated matrix mpc." + current);
    for (const char* required : {"bus", "gen", "branch"})
        if (!tables.count(required)) throw ParseError("case", std::string("missing mpc.") + required);

    PowerCase grid;
    grid.base_mva = scalars.count("baseMVA") ? scalars["baseMVA"] : 100.0;

    const Table& bus = tables["bus"];
    int references = 0;
    for (std::size_t r = 0; r < bus.rows.size(); ++r) {
        Bus b;
        b.id = static_cast<int>(column(bus, r, 0, "bus"));
        b.load_mw = column(bus, r, 2, "bus");
        if (static_cast<int>(column(bus, r, 1, "bus")) == 3) {
            grid.reference_bus = b.id;
            ++references;
        }
        grid.buses.push_back(b);
    }
    if (references != 1)
        throw ModelError("MATPOWER case must have exactly one reference bus (type 3), found " + std::to_string(references));

    const Table& branch = tables["branch"];
    for (std::size_t r = 0; r < branch.rows.size(); ++r) {
        Branch br;
        br.id = static_cast<int>(r) + 1;
        br.from = static_cast<int>(column(branch, r, 0, "branch"));
        br.to = static_cast<int>(column(branch, r, 1, "branch"));
        br.reactance = column(branch, r, 3, "branch");
        double rate = column(branch, r, 5, "branch");
        br.limit_mw = rate > 0 ? rate : kInf;
        br.closed = branch.rows[r].size() > 10 ? column(branch, r, 10, "branch") > 0 : true;
        grid.branches.push_back(br);
    }

    const Table& gen = tables["gen"];
    const Table* cost = tables.count("gencost") ? &tables["gencost"] : nullptr;
    for (std::size_t r = 0; r < gen.rows.size(); ++r) {
        bool online = gen.rows[r].size() > 7 ? column(gen, r, 7, "gen") > 0 : true;
        if (!online) continue;
        Generator g;
        g.bus = static_cast<int>(column(gen, r, 0, "gen"));
        g.capacity_mw = column(gen, r, 8, "gen");
        if (cost && r < cost->rows.size()) {
            const auto& c = cost->rows[r];
            int model = static_cast<int>(c.at(0));
            int n = static_cast<int>(c.at(3));
            if (model == 2 && n >= 2 && c.size() >= static_cast<std::size_t>(4 + n)) {
                g.offer = c[4 + n - 2];   // linear coefficient
            } else if (model == 1 && n >= 2 && c.size() >= 8) {
                double dx = c[6] - c[4];
                g.offer = dx != 0 ? (c[7] - c[5]) / dx : 0.0;
            }
        }
        grid.generators.push_back(g);
    }
    return grid;
}

}  // namespace rtlmp::detail
