"""Regenerates the tiny BERT fixture and its reference hidden states."""
import json
import pathlib

import torch
from transformers import BertConfig, BertModel, BertTokenizer

out = pathlib.Path(__file__).parent / "tiny_bert"
out.mkdir(exist_ok=True)
vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "i", "feel", "so", "tired", "and", "hope", "##less",
         "today", "un", "##aff", "##able", "work", "is", "!", ",", "."]
(out / "vocab.txt").write_text("\n".join(vocab) + "\n")

torch.manual_seed(0)
config = BertConfig(vocab_size=len(vocab), hidden_size=8, num_hidden_layers=2, num_attention_heads=2,
                    intermediate_size=16, max_position_embeddings=32, type_vocab_size=2, hidden_act="gelu",
                    hidden_dropout_prob=0.0, attention_probs_dropout_prob=0.0)
model = BertModel(config, add_pooling_layer=False).eval()
model.save_pretrained(out, safe_serialization=True)
cfg = json.loads((out / "config.json").read_text())
(out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")

tok = BertTokenizer(str(out / "vocab.txt"), do_lower_case=True)
cases = []
for text in ["I feel so tired and hopeless today!", "unaffable work, is it?"]:
    enc = tok(text, padding="max_length", max_length=16, truncation=True, return_tensors="pt")
    with torch.no_grad():
        hidden = model(**enc).last_hidden_state[0]
    cases.append({"text": text, "input_ids": enc["input_ids"][0].tolist(),
                  "attention_mask": enc["attention_mask"][0].tolist(), "hidden": hidden.tolist()})
(out / "expected.json").write_text(json.dumps({"max_length": 16, "cases": cases}, indent=1) + "\n")
