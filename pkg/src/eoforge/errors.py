"""Exception types shared across the pipeline."""


class ForgeError(Exception):
    """Base class for all pipeline errors."""


# --- sampling ---

class MaxRejectionsExceeded(ForgeError):
    """Rejection sampling failed to find a land point within the budget."""


class PolarFootprint(ForgeError):
    """Footprint center too close to a pole for the lon conversion."""


# --- catalog / download ---

class EmptyDateRange(ForgeError):
    """Download plan requested zero months."""


class ProviderUnavailable(ForgeError):
    """Catalog provider unreachable after retries."""


class MalformedResponse(ForgeError):
    """Provider returned a payload we cannot parse."""


class BandUnavailable(ForgeError):
    """Requested band not offered by the product."""


class TruncatedPayload(ForgeError):
    """Raster body shorter than advertised."""


# --- raster I/O ---

class CorruptFile(ForgeError):
    """File unreadable as the expected raster format."""


class UnsupportedLayout(ForgeError):
    """Raster file readable but not in the supported layout."""


# --- converter ---

class AllNodata(ForgeError):
    """No valid pixels in the statistics scope."""


class MissingBand(ForgeError):
    """Raster lacks a band the conversion needs."""


# --- patches ---

class PatchTooLarge(ForgeError):
    """Patch size exceeds the image dimensions."""


class InconsistentSeries(ForgeError):
    """Time-series images disagree in shape or grid."""


# --- review queue ---

class UnknownItem(ForgeError):
    """Review item id not found."""


class AlreadyResolved(ForgeError):
    """Review item already has a human decision."""


# --- manifest / store ---

class SchemaMismatch(ForgeError):
    """Manifest schema version not supported."""


class CorruptManifest(ForgeError):
    """Manifest unreadable or violating its invariants."""


# --- orchestrator ---

class MissingPrerequisite(ForgeError):
    """Stage ordering violated: a prerequisite stage has not completed."""


class ConfigError(ForgeError):
    """Invalid or unknown configuration."""
