#pragma once
/// Run manifests: a single INI-style text file pins every knob of a run —
/// instance geometry, both training stages, the matcher, loss weights, and
/// ablation switches. The canonical text form yields a stable 64-bit
/// fingerprint so any report can be tied back to the exact configuration
/// that produced it.

#include <cstdint>
#include <string>

#include "osdr/pipeline.hpp"
#include "osdr/synth.hpp"

namespace osdr {

struct RunManifest {
  std::string instance;  // reference-instance name; empty = explicit spec
  SynthSpec spec;
  PipelineConfig cfg;
};

/// Parse INI text ('#'/';' comments). `name=` under [instance] loads a
/// reference instance as the base; later keys override it field by field.
/// Unknown sections or keys raise ConfigError.
RunManifest parse_manifest(const std::string& text);
RunManifest load_manifest(const std::string& path);

/// Canonical text form: every key in fixed order, numbers at full
/// round-trip precision. parse_manifest(canonical_manifest(m)) == m.
std::string canonical_manifest(const RunManifest& m);

void write_manifest(const std::string& path, const RunManifest& m);

/// FNV-1a 64 over the canonical text.
std::uint64_t manifest_fingerprint(const RunManifest& m);

/// Point instance generation, stage-A training, and the joint stage at
/// one seed (the --seed flag semantics).
void apply_seed(RunManifest& m, std::uint64_t seed);

}  // namespace osdr
