# Generated by Django 5.0.3 on 2026-10-18 09:14

import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('subcommand', models.CharField(max_length=32)),
                ('config_hash', models.CharField(db_index=True, max_length=12)),
                ('config_text', models.TextField()),
                ('status', models.CharField(choices=[('PASS', 'Passed'), ('FAIL', 'Verification failed'), ('CONFIG', 'Invalid configuration'), ('ABORT', 'Numerical abort')], default='PASS', max_length=6)),
                ('exit_code', models.IntegerField(default=0)),
                ('message', models.TextField(blank=True, default='')),
                ('report', models.JSONField(blank=True, default=dict)),
                ('output_dir', models.CharField(blank=True, default='', max_length=500)),
                ('created', models.DateTimeField(default=django.utils.timezone.now)),
            ],
            options={
                'ordering': ['-created'],
            },
        ),
    ]
