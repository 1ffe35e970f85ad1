"""Fortran package manager core, exposed from the C++ library."""

from ._forge import (  # noqa: F401
    DependencySpec,
    ExecutableSpec,
    ForgeError,
    Manifest,
    ManifestError,
    ModelError,
    ScanError,
    SourceInfo,
    UsageError,
    __version__,
    default_manifest,
    effective_flags,
    normalize_source,
    output_dir,
    parse_manifest,
    render_manifest,
    run,
    scan_c,
    scan_fortran,
    scan_tree,
    show_model,
    topo_order,
)
