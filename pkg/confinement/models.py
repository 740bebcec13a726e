# confinement/models.py

from django.db import models
from django.utils import timezone


class RunRecord(models.Model):
    """ One toolkit invocation: what ran, with which config, and how it ended. """
    STATUS_CHOICES = [
        ('PASS', 'Passed'),
        ('FAIL', 'Verification failed'),
        ('CONFIG', 'Invalid configuration'),
        ('ABORT', 'Numerical abort'),
    ]

    subcommand = models.CharField(max_length=32)
    config_hash = models.CharField(max_length=12, db_index=True)
    config_text = models.TextField()
    status = models.CharField(max_length=6, choices=STATUS_CHOICES, default='PASS')
    exit_code = models.IntegerField(default=0)
    message = models.TextField(blank=True, default='')
    report = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500, blank=True, default='')
    created = models.DateTimeField(default=timezone.now)

    class Meta:
        ordering = ['-created']

    def __str__(self):
        return f"{self.subcommand} [{self.config_hash}] {self.status}"
