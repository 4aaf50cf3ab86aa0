double sum_exp(void)
{
  double x;
  int i;
  x = exp(0);
#pragma pencil reduction (+:x)
  for (i = 1; i <= 100; i++)
    x += exp(i);
  return x;
}
