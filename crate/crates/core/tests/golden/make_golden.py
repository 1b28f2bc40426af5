"""Regenerates the empty-placeholder golden prompts from the template files."""
import pathlib

HERE = pathlib.Path(__file__).parent
TEMPLATES = HERE.parent.parent / "templates"
PLACEHOLDERS = {
    "summarization.md": ["{Protein Description}", "{BioAssay JSON}"],
    "generation.md": ["{Protein Description}", "{Assay Content}"],
    "relevance.md": ["{protein description}", "{BioAssay content}"],
    "ablation.md": ["{protein_description}"],
    "optimization.md": ["{hERG description}", "{hERG BioAssays}", "{Input SMILES}"],
}
for name, keys in PLACEHOLDERS.items():
    text = (TEMPLATES / name).read_text(encoding="utf-8")
    for k in keys:
        assert text.count(k) == 1, (name, k)
        text = text.replace(k, "")
    (HERE / name).write_text(text, encoding="utf-8")
