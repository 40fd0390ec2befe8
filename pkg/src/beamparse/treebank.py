"""CoNLL treebank IO, dependency tree containers, projectivity, UAS/LAS scoring."""

from dataclasses import dataclass, field


# Gold POS tags treated as punctuation when scoring with punctuation excluded.
PUNCT_TAGS = frozenset({"``", "''", ":", ",", "."})


class ConllError(ValueError):
    """Malformed CoNLL input. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(ValueError):
    """Two sentence sequences that should run in parallel do not."""


@dataclass
class Token:
    form: str
    pos: str
    head: int
    label: str


@dataclass
class DepTree:
    """A sentence with one head index and one arc label per token.

    Head indices are 1-based into the sentence; 0 is the artificial root.
    Heads may be gold or predicted depending on where the tree came from.
    """

    tokens: list = field(default_factory=list)
    origin: str = "gold"

    @classmethod
    def build(cls, forms, pos, heads, labels, origin="gold"):
        toks = [Token(f, p, h, l) for f, p, h, l in zip(forms, pos, heads, labels)]
        return cls(toks, origin)

    def __len__(self):
        return len(self.tokens)

    @property
    def forms(self):
        return [t.form for t in self.tokens]

    @property
    def pos_tags(self):
        return [t.pos for t in self.tokens]

    @property
    def heads(self):
        return [t.head for t in self.tokens]

    @property
    def labels(self):
        return [t.label for t in self.tokens]

    def copy(self):
        return DepTree([Token(t.form, t.pos, t.head, t.label) for t in self.tokens], self.origin)

    def root_count(self):
        return sum(1 for t in self.tokens if t.head == 0)

    def is_single_rooted(self):
        """True iff exactly one token attaches to 0 and every head chain reaches 0."""
        if self.root_count() != 1:
            return False
        n = len(self.tokens)
        for start in range(1, n + 1):
            seen = set()
            k = start
            while k != 0:
                if k in seen or not (1 <= k <= n):
                    return False
                seen.add(k)
                k = self.tokens[k - 1].head
        return True


@dataclass
class EvalReport:
    uas: float
    las: float
    scored_tokens: int
    total_tokens: int


def read_conll(stream, allow_underscore_heads=False):
    """Yield one DepTree per sentence block of tab-separated 10-column rows.

    Column 2 is the form, column 5 the POS tag (column 4 as fallback when 5
    is "_"), column 7 the head and column 8 the arc label.  Comment lines and
    CoNLL-U multiword/empty-node ids are skipped.  With
    ``allow_underscore_heads`` a "_" head is read as 0 (parser input whose
    heads are not filled in yet).
    """
    forms, pos, heads, labels, lines = [], [], [], [], []

    def flush():
        n = len(forms)
        for i, h in enumerate(heads):
            if not (0 <= h <= n):
                raise ConllError(f"head {h} out of range for a {n}-token sentence", lines[i])
            if h == i + 1:
                raise ConllError(f"token {i + 1} is its own head", lines[i])
        tree = DepTree.build(forms, pos, heads, labels)
        for buf in (forms, pos, heads, labels, lines):
            buf.clear()
        return tree

    lineno = 0
    for raw in stream:
        lineno += 1
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            if forms:
                yield flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConllError(f"expected 10 tab-separated columns, got {len(cols)}", lineno)
        if "-" in cols[0] or "." in cols[0]:
            continue  # multiword ranges / empty nodes carry no parse arcs
        try:
            idx = int(cols[0])
        except ValueError:
            raise ConllError(f"non-integer token index {cols[0]!r}", lineno) from None
        if idx != len(forms) + 1:
            raise ConllError(f"token index {idx} out of order (expected {len(forms) + 1})", lineno)
        form = cols[1]
        if not form:
            raise ConllError("empty form", lineno)
        tag = cols[4] if cols[4] != "_" else cols[3]
        if cols[6] == "_" and allow_underscore_heads:
            head = 0
        else:
            try:
                head = int(cols[6])
            except ValueError:
                raise ConllError(f"non-integer head {cols[6]!r}", lineno) from None
        forms.append(form)
        pos.append(tag)
        heads.append(head)
        labels.append(cols[7])
        lines.append(lineno)
    if forms:
        yield flush()


def write_conll(trees, stream):
    """Write trees as CoNLL-X rows; columns we do not track are emitted as "_"."""
    for tree in trees:
        for i, tok in enumerate(tree.tokens, start=1):
            stream.write(
                f"{i}\t{tok.form}\t_\t{tok.pos}\t{tok.pos}\t_\t{tok.head}\t{tok.label}\t_\t_\n"
            )
        stream.write("\n")


def _arcs_cross(l1, r1, l2, r2):
    return l1 < l2 < r1 < r2 or l2 < l1 < r2 < r1


def is_projective(tree):
    """True iff the tree is well formed (single root, acyclic) and no two arcs cross.

    Arcs from the artificial root take part in the crossing check with
    position 0, so a token reaching over the root attachment counts as a
    crossing.
    """
    if not tree.is_single_rooted():
        return False
    spans = [(min(i, t.head), max(i, t.head)) for i, t in enumerate(tree.tokens, start=1)]
    for a in range(len(spans)):
        for b in range(a + 1, len(spans)):
            if _arcs_cross(*spans[a], *spans[b]):
                return False
    return True


def evaluate(gold, predicted, exclude_punct=True):
    """Score predicted heads/labels against gold, by exact match.

    Tokens whose gold POS tag is punctuation are skipped when
    ``exclude_punct`` is set.  A run with zero scored tokens counts as
    error-free (1.0/1.0).
    """
    gold = list(gold)
    predicted = list(predicted)
    if len(gold) != len(predicted):
        raise AlignmentError(f"{len(gold)} gold sentences vs {len(predicted)} predicted")
    scored = total = head_ok = both_ok = 0
    for si, (g, p) in enumerate(zip(gold, predicted)):
        if len(g) != len(p):
            raise AlignmentError(f"sentence {si}: {len(g)} gold tokens vs {len(p)} predicted")
        for gt, pt in zip(g.tokens, p.tokens):
            total += 1
            if exclude_punct and gt.pos in PUNCT_TAGS:
                continue
            scored += 1
            if pt.head == gt.head:
                head_ok += 1
                if pt.label == gt.label:
                    both_ok += 1
    if scored == 0:
        return EvalReport(1.0, 1.0, 0, total)
    return EvalReport(head_ok / scored, both_ok / scored, scored, total)
