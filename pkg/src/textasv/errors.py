"""Exception hierarchy shared across the toolkit.

DataError covers malformed or inconsistent inputs (CLI exit code 2),
NumericError covers degenerate numeric states (CLI exit code 3).
"""


class TextAsvError(Exception):
    exit_code = 2


class DataError(TextAsvError):
    exit_code = 2


class NumericError(TextAsvError):
    exit_code = 3


# corpus
class MalformedRecord(DataError):
    def __init__(self, line_number, reason=""):
        self.line_number = line_number
        super().__init__(f"malformed record at line {line_number}: {reason}")


class DuplicateUttId(DataError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"duplicate utt_id {utt_id!r}")


class EmptyText(DataError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"empty text for utt_id {utt_id!r}")


class InconsistentSex(DataError):
    def __init__(self, speaker_id):
        self.speaker_id = speaker_id
        super().__init__(f"conflicting sex labels for speaker {speaker_id!r}")


class EmptyCorpus(DataError):
    pass


# encoder
class EmptyTrainingSet(DataError):
    pass


class TokenIdOutOfRange(DataError):
    pass


class TraceMismatch(DataError):
    pass


# aam head
class ZeroNormEmbedding(NumericError):
    pass


class ZeroNormWeightRow(NumericError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"classifier weight row {row} has zero norm")


class TargetOutOfRange(DataError):
    pass


# trainer
class ShapeMismatch(DataError):
    pass


class TooFewSpeakers(DataError):
    pass


class BatchTooLarge(DataError):
    pass


class EmptyLog(DataError):
    pass


# asv
class ZeroVector(NumericError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyEnrollment(DataError):
    pass


class MixedSpeakers(DataError):
    pass


class NoPositivePairs(DataError):
    def __init__(self, speaker_id):
        self.speaker_id = speaker_id
        super().__init__(f"no positive trials for speaker {speaker_id!r}")


class NoNegativePairs(DataError):
    def __init__(self, speaker_id):
        self.speaker_id = speaker_id
        super().__init__(f"no negative trials for speaker {speaker_id!r}")


class OutOfRange(DataError):
    pass


# attribution
class InvalidTokenIds(DataError):
    pass


class MissingThreshold(DataError):
    def __init__(self, speaker_id):
        self.speaker_id = speaker_id
        super().__init__(f"no EER threshold for speaker {speaker_id!r}")


# synthetic corpus
class VocabTooSmall(DataError):
    pass


# checkpoints
class BadCheckpoint(DataError):
    pass
