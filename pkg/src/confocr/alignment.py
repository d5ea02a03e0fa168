"""Two-step alignment of OCR boxes with ground-truth boxes.

Step one matches every OCR box to each GT box covering at least a threshold
fraction of its area, and vice-versa; running the rule in both directions
keeps small fragments (a trailing "." inside a larger "text." box) attached
even though they cover almost none of the big box. Step two merges the two
mappings into one undirected graph and takes connected components; each
component with at least one GT box becomes a unit of comparison, GT boxes
with no match become singleton components, and OCR-only components are
dropped but counted.
"""

from __future__ import annotations

from dataclasses import dataclass

from confocr.geometry import Document, coverage_fraction

DEFAULT_THRESHOLD = 0.10


def normalize(text: str) -> str:
    """Lowercase and strip all whitespace; the comparison form for texts."""
    return "".join(text.lower().split())


@dataclass(frozen=True)
class MatchEdge:
    """A coverage match between one OCR box and one GT box.

    direction records which side(s) of the bidirectional rule fired:
    "ocr_to_gt" (the GT box covers enough of the OCR box), "gt_to_ocr"
    (the OCR box covers enough of the GT box) or "both".
    """

    ocr_id: str
    gt_id: str
    direction: str


@dataclass(frozen=True)
class AlignedComponent:
    """One connected component of matched boxes, the unit of error labelling."""

    gt_ids: tuple[str, ...]
    ocr_ids: tuple[str, ...]
    gt_text: str
    ocr_text: str
    confidence: float | None
    is_error: bool
    is_unmatched_gt: bool


@dataclass(frozen=True)
class AlignmentResult:
    """All components of one document, in GT reading order."""

    doc_id: str
    components: tuple[AlignedComponent, ...]
    unmatched_ocr_count: int


def build_match_graph(doc: Document, threshold: float = DEFAULT_THRESHOLD) -> list[MatchEdge]:
    """Bidirectional coverage matching between a document's OCR and GT boxes.

    An edge (o, g) exists iff coverage_fraction(o, g) >= threshold or
    coverage_fraction(g, o) >= threshold. The comparison is inclusive, so
    a threshold of exactly 0.10 admits a 10% cover.
    """
    if not (0.0 <= threshold < 1.0):
        raise ValueError(f"threshold must be in [0, 1), got {threshold!r}")
    edges: list[MatchEdge] = []
    for o in doc.ocr_boxes:
        for g in doc.gt_boxes:
            o2g = coverage_fraction(o.bbox, g.bbox) >= threshold
            g2o = coverage_fraction(g.bbox, o.bbox) >= threshold
            if threshold == 0.0:
                # At threshold 0 every pair trivially passes ">= 0"; only keep
                # pairs that actually touch, so disjoint boxes stay unmatched.
                o2g = coverage_fraction(o.bbox, g.bbox) > 0.0
                g2o = coverage_fraction(g.bbox, o.bbox) > 0.0
            if o2g and g2o:
                edges.append(MatchEdge(o.id, g.id, "both"))
            elif o2g:
                edges.append(MatchEdge(o.id, g.id, "ocr_to_gt"))
            elif g2o:
                edges.append(MatchEdge(o.id, g.id, "gt_to_ocr"))
    return edges


class _DisjointSet:
    """Union-find with path compression over arbitrary hashable nodes."""

    def __init__(self):
        self._parent: dict = {}

    def add(self, x) -> None:
        self._parent.setdefault(x, x)

    def find(self, x):
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:
            self._parent[x], x = root, self._parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self._parent[rb] = ra

    def groups(self) -> dict:
        out: dict = {}
        for node in self._parent:
            out.setdefault(self.find(node), []).append(node)
        return out


def _make_component(doc: Document, gt_ids: list[str], ocr_ids: list[str]) -> AlignedComponent:
    gt_by_id = {b.id: b for b in doc.gt_boxes}
    ocr_by_id = {b.id: b for b in doc.ocr_boxes}
    gts = sorted((gt_by_id[i] for i in gt_ids), key=lambda b: b.order_index)
    # The GT side dictates reading order; OCR boxes inside a component have no
    # annotated order, so fall back to geometric reading order (top-left first).
    ocrs = sorted((ocr_by_id[i] for i in ocr_ids), key=lambda b: (b.bbox.y0, b.bbox.x0))
    gt_text = " ".join(b.text for b in gts)
    ocr_text = " ".join(b.text for b in ocrs)
    unmatched = not ocrs
    if unmatched:
        confidence = None
        is_error = normalize(gt_text) != ""
    else:
        confidence = sum(b.confidence for b in ocrs) / len(ocrs)
        is_error = normalize(ocr_text) != normalize(gt_text)
    return AlignedComponent(
        gt_ids=tuple(b.id for b in gts),
        ocr_ids=tuple(b.id for b in ocrs),
        gt_text=gt_text,
        ocr_text=ocr_text,
        confidence=confidence,
        is_error=is_error,
        is_unmatched_gt=unmatched,
    )


def connected_components(doc: Document, edges: list[MatchEdge]) -> AlignmentResult:
    """Merge the match graph into aligned components.

    Every GT box lands in exactly one component. OCR-only components are
    dropped and counted in unmatched_ocr_count. Components are ordered by
    the minimum order_index of their GT members.
    """
    dsu = _DisjointSet()
    for o in doc.ocr_boxes:
        dsu.add(("ocr", o.id))
    for g in doc.gt_boxes:
        dsu.add(("gt", g.id))
    for e in edges:
        dsu.union(("ocr", e.ocr_id), ("gt", e.gt_id))

    order_by_gt_id = {b.id: b.order_index for b in doc.gt_boxes}
    components: list[AlignedComponent] = []
    unmatched_ocr = 0
    for members in dsu.groups().values():
        gt_ids = [i for kind, i in members if kind == "gt"]
        ocr_ids = [i for kind, i in members if kind == "ocr"]
        if not gt_ids:
            unmatched_ocr += len(ocr_ids)
            continue
        components.append(_make_component(doc, gt_ids, ocr_ids))

    components.sort(key=lambda c: min(order_by_gt_id[i] for i in c.gt_ids))
    return AlignmentResult(
        doc_id=doc.doc_id,
        components=tuple(components),
        unmatched_ocr_count=unmatched_ocr,
    )


def align_document(doc: Document, threshold: float = DEFAULT_THRESHOLD) -> AlignmentResult:
    """build_match_graph + connected_components; deterministic for fixed input."""
    return connected_components(doc, build_match_graph(doc, threshold))
