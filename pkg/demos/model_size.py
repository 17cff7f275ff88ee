"""
Parameter counts of the network variants
========================================

Counts trainable scalars for the five DML ablation variants at the
full-size configuration (4 RDMs of 4 DMLs, 8 x 8 windows, 305 bands), then
shows how the channel width was picked to land on 4.60 M parameters.
"""
from hdmba.network import (ABLATION_ROWS, FULL_CHANNELS, HDMba, full_config, parameter_count,
                           parameter_report)

for name, flags in ABLATION_ROWS.items():
    print(f"{name:<15} {parameter_count(HDMba(full_config(**flags))) / 1e6:6.3f} M")

model = HDMba(full_config())
print()
for group, n in parameter_report(model).items():
    print(f"{group:<8} {n:>10,d}")
print(f"C = {FULL_CHANNELS} gives {parameter_count(model):,d} parameters")

for c in (FULL_CHANNELS - 1, FULL_CHANNELS + 1):
    print(f"   C = {c} would give {parameter_count(HDMba(full_config(channels=c))):,d}")
