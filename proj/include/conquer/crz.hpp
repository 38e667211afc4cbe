#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "conquer/circuit.hpp"
#include "conquer/errors.hpp"

namespace conquer {

enum class PrimitiveKind : std::uint8_t { H, CNOT, RZ };

/// One primitive gate. RZ(angle) = exp(-i angle Z / 2), the OpenQASM convention.
struct Primitive {
    PrimitiveKind kind;
    unsigned q0 = 0;  // H/RZ target, or CNOT control
    unsigned q1 = 0;  // CNOT target
    double angle = 0.0;

    static Primitive h(unsigned q) { return {PrimitiveKind::H, q, 0, 0.0}; }
    static Primitive cnot(unsigned control, unsigned target) { return {PrimitiveKind::CNOT, control, target, 0.0}; }
    static Primitive rz(unsigned q, double angle) { return {PrimitiveKind::RZ, q, 0, angle}; }

    friend bool operator==(const Primitive &, const Primitive &) = default;
};

struct CRZProgram {
    unsigned n_qubits = 0;
    std::vector<Primitive> ops;
};

/// Decomposes every exp(i theta X_g) into H . CNOT-ladder . RZ . CNOT-ladder . H on the
/// qubits of g, with the ladder accumulating parity onto the highest-index qubit.
/// exp(i theta Z_g) needs RZ(-2 theta) in the exp(-i angle Z / 2) convention.
/// Back-to-back H pairs on the same qubit are cancelled.
inline CRZProgram to_crz_program(const IQPCircuit &c) {
    CRZProgram prog{c.n_qubits(), {}};
    std::vector<bool> live;
    std::vector<long> last_h(c.n_qubits(), -1);  // index of a trailing H on each qubit
    auto emit = [&](Primitive p) {
        if (p.kind == PrimitiveKind::H && last_h[p.q0] >= 0) {
            live[static_cast<std::size_t>(last_h[p.q0])] = false;
            last_h[p.q0] = -1;
            return;
        }
        prog.ops.push_back(p);
        live.push_back(true);
        const long idx = static_cast<long>(prog.ops.size()) - 1;
        if (p.kind == PrimitiveKind::H) {
            last_h[p.q0] = idx;
        } else {
            last_h[p.q0] = -1;
            if (p.kind == PrimitiveKind::CNOT) last_h[p.q1] = -1;
        }
    };
    for (std::size_t j = 0; j < c.size(); ++j) {
        const auto qs = c.generator(j).qubits();
        for (unsigned q : qs) emit(Primitive::h(q));
        for (std::size_t i = 0; i + 1 < qs.size(); ++i) emit(Primitive::cnot(qs[i], qs[i + 1]));
        emit(Primitive::rz(qs.back(), -2.0 * c.theta(j)));
        for (std::size_t i = qs.size() - 1; i-- > 0;) emit(Primitive::cnot(qs[i], qs[i + 1]));
        for (unsigned q : qs) emit(Primitive::h(q));
    }
    std::vector<Primitive> kept;
    kept.reserve(prog.ops.size());
    for (std::size_t i = 0; i < prog.ops.size(); ++i) {
        if (live[i]) kept.push_back(prog.ops[i]);
    }
    prog.ops = std::move(kept);
    return prog;
}

/// OpenQASM 3 text using only h, cx and rz, followed by a full measurement.
inline void write_qasm(std::ostream &out, const CRZProgram &prog) {
    out << "OPENQASM 3.0;\n";
    out << "include \"stdgates.inc\";\n";
    out << "qubit[" << prog.n_qubits << "] q;\n";
    out << "bit[" << prog.n_qubits << "] c;\n";
    for (const auto &op : prog.ops) {
        switch (op.kind) {
            case PrimitiveKind::H:
                out << "h q[" << op.q0 << "];\n";
                break;
            case PrimitiveKind::CNOT:
                out << "cx q[" << op.q0 << "], q[" << op.q1 << "];\n";
                break;
            case PrimitiveKind::RZ:
                out << "rz(" << format_double(op.angle) << ") q[" << op.q0 << "];\n";
                break;
        }
    }
    out << "c = measure q;\n";
}

inline std::string to_qasm(const CRZProgram &prog) {
    std::ostringstream os;
    write_qasm(os, prog);
    return os.str();
}

/// Reads back the subset of OpenQASM 3 that write_qasm produces.
inline CRZProgram read_qasm(std::istream &in) {
    static const std::regex re_qubits(R"(^qubit\[(\d+)\]\s+q;$)");
    static const std::regex re_h(R"(^h\s+q\[(\d+)\];$)");
    static const std::regex re_cx(R"(^cx\s+q\[(\d+)\],\s*q\[(\d+)\];$)");
    static const std::regex re_rz(R"(^rz\(([^)]+)\)\s+q\[(\d+)\];$)");
    CRZProgram prog;
    bool have_register = false;
    std::string line;
    std::smatch m;
    auto qubit = [&](const std::string &s) {
        const unsigned long q = std::stoul(s);
        if (!have_register || q >= prog.n_qubits) throw FormatError("qubit index out of range: " + s);
        return static_cast<unsigned>(q);
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("//", 0) == 0 || line.rfind("OPENQASM", 0) == 0 ||
            line.rfind("include", 0) == 0 || line.rfind("bit[", 0) == 0 || line.rfind("c = measure", 0) == 0) {
            continue;
        }
        if (std::regex_match(line, m, re_qubits)) {
            prog.n_qubits = static_cast<unsigned>(std::stoul(m[1]));
            have_register = true;
        } else if (std::regex_match(line, m, re_h)) {
            prog.ops.push_back(Primitive::h(qubit(m[1])));
        } else if (std::regex_match(line, m, re_cx)) {
            prog.ops.push_back(Primitive::cnot(qubit(m[1]), qubit(m[2])));
        } else if (std::regex_match(line, m, re_rz)) {
            prog.ops.push_back(Primitive::rz(qubit(m[2]), parse_double(m[1].str())));
        } else {
            throw FormatError("unsupported assembly line: '" + line + "'");
        }
    }
    if (!have_register) throw FormatError("assembly text declares no qubit register");
    return prog;
}

}  // namespace conquer
