# EGAD Distillation Lab
