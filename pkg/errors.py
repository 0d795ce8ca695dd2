# File: errors.py


class ValidationError(ValueError):
    """Bad input: wrong shape, out-of-range value, malformed record."""


class RegistryError(ValidationError):
    def __init__(self, dist_id):
        self.dist_id = dist_id
        super().__init__(f"🚨 Unknown distortion id {dist_id!r}; registry holds ids 1..30")


class PoseParseError(ValidationError):
    def __init__(self, message: str, field_index: int):
        self.field_index = field_index
        super().__init__(f"🚨 Pose field {field_index}: {message}")


class AlignmentError(ValidationError):
    def __init__(self, message: str, missing_ids):
        self.missing_ids = sorted(missing_ids)
        preview = ", ".join(map(str, self.missing_ids[:10]))
        more = "" if len(self.missing_ids) <= 10 else f" (+{len(self.missing_ids) - 10:,} more)"
        super().__init__(f"🚨 {message}: {preview}{more}")
